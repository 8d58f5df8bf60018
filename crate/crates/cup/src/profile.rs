//! Resident personas: demographic sampling plus chained persona prompts
//! with repetition avoidance across the population.

use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gateway::{ChatRequest, Gateway, GatewayError};
use crate::plan::Region;
use crate::util::render;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgeBucket {
    pub min: u32,
    pub max: u32,
    pub p: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenderCategory {
    pub label: String,
    pub p: f64,
}

/// Sampling spec: `{age_buckets: [{min,max,p}], genders: [{label,p}]}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DemographicSpec {
    pub age_buckets: Vec<AgeBucket>,
    pub genders: Vec<GenderCategory>,
}

impl DemographicSpec {
    pub fn validate(&self) -> Result<(), ProfileError> {
        let bucket_sum: f64 = self.age_buckets.iter().map(|b| b.p).sum();
        if (bucket_sum - 1.0).abs() > 1e-9 {
            return Err(ProfileError::InvalidDemographics(format!(
                "age bucket probabilities sum to {bucket_sum}, expected 1"
            )));
        }
        let gender_sum: f64 = self.genders.iter().map(|g| g.p).sum();
        if (gender_sum - 1.0).abs() > 1e-9 {
            return Err(ProfileError::InvalidDemographics(format!(
                "gender probabilities sum to {gender_sum}, expected 1"
            )));
        }
        let mut sorted: Vec<&AgeBucket> = self.age_buckets.iter().collect();
        sorted.sort_by_key(|b| b.min);
        for pair in sorted.windows(2) {
            if pair[0].max >= pair[1].min {
                return Err(ProfileError::InvalidDemographics(format!(
                    "age buckets [{},{}] and [{},{}] overlap",
                    pair[0].min, pair[0].max, pair[1].min, pair[1].max
                )));
            }
        }
        for bucket in &self.age_buckets {
            if bucket.min > bucket.max {
                return Err(ProfileError::InvalidDemographics(format!(
                    "age bucket [{},{}] is inverted",
                    bucket.min, bucket.max
                )));
            }
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<DemographicSpec, ProfileError> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            ProfileError::InvalidDemographics(format!("cannot read `{}`: {e}", path.display()))
        })?;
        let spec: DemographicSpec = serde_json::from_str(&text).map_err(|e| {
            ProfileError::InvalidDemographics(format!("cannot parse `{}`: {e}", path.display()))
        })?;
        spec.validate()?;
        Ok(spec)
    }
}

/// Demographic draw backing one profile.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Basics {
    pub age: u32,
    pub gender: String,
    pub home_area: String,
}

/// A fully generated resident persona.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResidentProfile {
    pub id: String,
    pub age: u32,
    pub gender: String,
    pub personality: String,
    pub occupation: String,
    pub hobbies: Vec<String>,
    pub lifestyle: String,
    pub pursuits: String,
    pub home_area: String,
}

impl ResidentProfile {
    /// First-person identity block used by every prompt that role-plays
    /// this resident. Starts with `You are R_i,` so scripts can route on it.
    pub fn prompt_block(&self) -> String {
        format!(
            "You are {}, a {}-year-old {}.\nPersonality: {}\nOccupation: {}\nHobbies: {}\nLifestyle: {}\nPursuits: {}\nYou live in area {}.",
            self.id,
            self.age,
            self.gender,
            self.personality,
            self.occupation,
            self.hobbies.join(", "),
            self.lifestyle,
            self.pursuits,
            self.home_area,
        )
    }
}

#[derive(Debug, Error)]
pub enum ProfileError {
    #[error("NoResidentialArea: the region has no residential area to home a resident")]
    NoResidentialArea,
    #[error("InvalidDemographics: {0}")]
    InvalidDemographics(String),
    #[error("EmptyField: profile step `{0}` produced blank output")]
    EmptyField(String),
    #[error("GatewayFailure: {0}")]
    Gateway(#[from] GatewayError),
    #[error("resident {index}: {source}")]
    AtResident {
        index: usize,
        #[source]
        source: Box<ProfileError>,
    },
}

/// Draw age, gender and home area. Deterministic given the RNG state:
/// bucket, then age within it, then gender, then home.
pub fn sample_basics<R: Rng>(
    spec: &DemographicSpec,
    region: &Region,
    rng: &mut R,
) -> Result<Basics, ProfileError> {
    spec.validate()?;
    let homes: Vec<&str> = region.residential_areas().map(|a| a.id.as_str()).collect();
    if homes.is_empty() {
        return Err(ProfileError::NoResidentialArea);
    }
    let bucket = categorical(rng, self_probs(&spec.age_buckets, |b| b.p));
    let bucket = &spec.age_buckets[bucket];
    let age = rng.gen_range(bucket.min..=bucket.max);
    let gender_idx = categorical(rng, self_probs(&spec.genders, |g| g.p));
    let gender = spec.genders[gender_idx].label.clone();
    let home_area = homes[rng.gen_range(0..homes.len())].to_string();
    Ok(Basics {
        age,
        gender,
        home_area,
    })
}

fn self_probs<T>(items: &[T], p: impl Fn(&T) -> f64) -> Vec<f64> {
    items.iter().map(p).collect()
}

fn categorical<R: Rng>(rng: &mut R, probs: Vec<f64>) -> usize {
    let draw: f64 = rng.gen();
    let mut cumulative = 0.0;
    for (i, p) in probs.iter().enumerate() {
        cumulative += p;
        if draw < cumulative {
            return i;
        }
    }
    probs.len() - 1
}

fn avoid_list(values: &[String]) -> String {
    if values.is_empty() {
        "(none)".to_string()
    } else {
        values.join(", ")
    }
}

#[derive(Debug, Deserialize)]
struct ProfileDetails {
    hobbies: Vec<String>,
    lifestyle: String,
    pursuits: String,
}

/// Chain three persona prompts: personality, then occupation (with an
/// avoid list from earlier profiles, re-asking on collision), then
/// hobbies/lifestyle/pursuits as one structured step.
pub fn generate_profile(
    id: &str,
    basics: &Basics,
    prior_profiles: &[ResidentProfile],
    gateway: &Gateway,
) -> Result<ResidentProfile, ProfileError> {
    let age = basics.age.to_string();
    let used_occupations: Vec<String> = prior_profiles
        .iter()
        .map(|p| p.occupation.clone())
        .collect();
    let used_hobbies: Vec<String> = prior_profiles
        .iter()
        .flat_map(|p| p.hobbies.iter().cloned())
        .collect();

    let personality_prompt = render(
        include_str!("../prompts/profile_personality.txt"),
        &[("id", id), ("age", &age), ("gender", &basics.gender)],
    );
    let personality = gateway
        .complete(&ChatRequest::new("profile.personality", personality_prompt))?
        .text
        .trim()
        .to_string();
    if personality.is_empty() {
        return Err(ProfileError::EmptyField("personality".to_string()));
    }

    let mut occupation = String::new();
    for attempt in 0..3 {
        let retry_note = if attempt == 0 {
            String::new()
        } else {
            format!(" Your previous suggestion was already taken; pick something different (attempt {}).", attempt + 1)
        };
        let prompt = render(
            include_str!("../prompts/profile_occupation.txt"),
            &[
                ("id", id),
                ("age", &age),
                ("gender", &basics.gender),
                ("personality", &personality),
                ("avoid_occupations", &avoid_list(&used_occupations)),
                ("retry_note", &retry_note),
            ],
        );
        occupation = gateway
            .complete(&ChatRequest::new("profile.occupation", prompt))?
            .text
            .trim()
            .to_string();
        if occupation.is_empty() {
            return Err(ProfileError::EmptyField("occupation".to_string()));
        }
        let collides = used_occupations
            .iter()
            .any(|o| o.eq_ignore_ascii_case(&occupation));
        if !collides {
            break;
        }
        if attempt == 2 {
            // The backend kept colliding; disambiguate deterministically.
            let suffix = id.trim_start_matches("R_");
            occupation = format!("{occupation} #{suffix}");
            log::warn!("profile {id}: occupation collision persisted, using `{occupation}`");
        }
    }

    let details_prompt = render(
        include_str!("../prompts/profile_details.txt"),
        &[
            ("id", id),
            ("age", &age),
            ("gender", &basics.gender),
            ("personality", &personality),
            ("occupation", &occupation),
            ("avoid_hobbies", &avoid_list(&used_hobbies)),
        ],
    );
    let details: ProfileDetails = gateway.complete_structured(
        &ChatRequest::new("profile.details", details_prompt),
        r#"{"hobbies": ["..."], "lifestyle": "...", "pursuits": "..."}"#,
    )?;
    let hobbies: Vec<String> = details
        .hobbies
        .iter()
        .map(|h| h.trim().to_string())
        .filter(|h| !h.is_empty())
        .collect();
    if hobbies.is_empty() {
        return Err(ProfileError::EmptyField("hobbies".to_string()));
    }
    if details.lifestyle.trim().is_empty() {
        return Err(ProfileError::EmptyField("lifestyle".to_string()));
    }
    if details.pursuits.trim().is_empty() {
        return Err(ProfileError::EmptyField("pursuits".to_string()));
    }

    Ok(ResidentProfile {
        id: id.to_string(),
        age: basics.age,
        gender: basics.gender.clone(),
        personality,
        occupation,
        hobbies,
        lifestyle: details.lifestyle.trim().to_string(),
        pursuits: details.pursuits.trim().to_string(),
        home_area: basics.home_area.clone(),
    })
}

/// Generate `n` profiles sequentially so each avoid list covers all the
/// profiles before it. Ids run `R_1..R_n`.
pub fn build_population<R: Rng>(
    n: usize,
    spec: &DemographicSpec,
    region: &Region,
    gateway: &Gateway,
    rng: &mut R,
) -> Result<Vec<ResidentProfile>, ProfileError> {
    let mut profiles = Vec::with_capacity(n);
    for i in 1..=n {
        let id = format!("R_{i}");
        let basics = sample_basics(spec, region, rng)
            .map_err(|e| ProfileError::AtResident {
                index: i,
                source: Box::new(e),
            })?;
        let profile = generate_profile(&id, &basics, &profiles, gateway).map_err(|e| {
            ProfileError::AtResident {
                index: i,
                source: Box::new(e),
            }
        })?;
        profiles.push(profile);
    }
    Ok(profiles)
}

pub fn save_population(profiles: &[ResidentProfile], path: &Path) -> std::io::Result<()> {
    let mut text = serde_json::to_string_pretty(profiles).expect("profiles serialize");
    text.push('\n');
    std::fs::write(path, text)
}

pub fn load_population(path: &Path) -> Result<Vec<ResidentProfile>, ProfileError> {
    let text = std::fs::read_to_string(path).map_err(|e| {
        ProfileError::InvalidDemographics(format!("cannot read `{}`: {e}", path.display()))
    })?;
    serde_json::from_str(&text).map_err(|e| {
        ProfileError::InvalidDemographics(format!("cannot parse `{}`: {e}", path.display()))
    })
}
