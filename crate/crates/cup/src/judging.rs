//! Plan evaluation: coverage metrics from the plan, questionnaire
//! interviews over the residents' memories, the overall score, and
//! improvement suggestions for the next cycle.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gateway::{ChatRequest, Gateway, GatewayError};
use crate::living::Environment;
use crate::memory::{MemoryParams, MemoryPool};
use crate::plan::{essential_categories, EssentialCategory, LandUseType, Region, UrbanPlan};
use crate::profile::ResidentProfile;
use crate::util::{render, round2};

/// Metric knobs, all defaulted to the reported configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct JudgingConfig {
    /// Service radius in meters for accessibility coverage.
    pub radius_m: f64,
    /// Measure ecology by area count instead of land share.
    pub ecology_by_count: bool,
    /// Average the two quantitative metrics before blending with
    /// experience, instead of the default three-way mean.
    pub overall_pairwise: bool,
    /// Essential-service categories counted by accessibility.
    pub categories: Vec<EssentialCategory>,
}

impl Default for JudgingConfig {
    fn default() -> Self {
        JudgingConfig {
            radius_m: 500.0,
            ecology_by_count: false,
            overall_pairwise: false,
            categories: essential_categories(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuantScores {
    pub accessibility: f64,
    pub ecology: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InterviewAnswer {
    pub resident: String,
    pub question: String,
    pub score: f64,
    pub rationale: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QualScore {
    pub experience: f64,
    pub answers: Vec<InterviewAnswer>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Target {
    Area(String),
    Category(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Proposed {
    LandUse(LandUseType),
    FreeText(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Suggestion {
    pub target: Target,
    pub proposed: Proposed,
    pub rationale: String,
}

impl Suggestion {
    pub fn describe(&self) -> String {
        let target = match &self.target {
            Target::Area(id) => id.clone(),
            Target::Category(cat) => format!("category `{cat}`"),
        };
        let proposed = match &self.proposed {
            Proposed::LandUse(u) => u.label().to_string(),
            Proposed::FreeText(text) => text.clone(),
        };
        format!("{target} -> {proposed} ({})", self.rationale)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SuggestionList {
    pub items: Vec<Suggestion>,
}

/// Everything one judging pass produced for iteration `k`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JudgeReport {
    pub iteration: u32,
    pub quant: QuantScores,
    pub qual: QualScore,
    pub overall: f64,
    pub suggestions: SuggestionList,
}

impl JudgeReport {
    pub fn save(&self, path: &Path) -> std::io::Result<()> {
        let mut text = serde_json::to_string_pretty(self).expect("report serializes");
        text.push('\n');
        std::fs::write(path, text)
    }

    pub fn load(path: &Path) -> Result<JudgeReport, JudgingError> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            JudgingError::ReportUnreadable(format!("cannot read `{}`: {e}", path.display()))
        })?;
        serde_json::from_str(&text).map_err(|e| {
            JudgingError::ReportUnreadable(format!("cannot parse `{}`: {e}", path.display()))
        })
    }

    /// One table row in the reported percent format.
    pub fn to_markdown(&self, label: &str) -> String {
        format!(
            "# Planning efficacy (%)\n\n| Method | Access. | Ecology | Experi. |\n|---|---|---|---|\n| {} | {:.2} | {:.2} | {:.2} |\n",
            label, self.quant.accessibility, self.quant.ecology, self.qual.experience
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Question {
    pub id: String,
    pub text: String,
}

/// Interview questionnaire; the file format is a bare `[{id, text}]` array.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Questionnaire {
    pub questions: Vec<Question>,
}

impl Questionnaire {
    /// The default five questions: commute, amenities, greenery, social
    /// life, overall satisfaction.
    pub fn default_five() -> Questionnaire {
        let q = |id: &str, text: &str| Question {
            id: id.to_string(),
            text: text.to_string(),
        };
        Questionnaire {
            questions: vec![
                q("q1", "How satisfied are you with your daily commute and errands?"),
                q("q2", "How well do nearby amenities cover your daily needs?"),
                q("q3", "How satisfied are you with greenery and open air around your home?"),
                q("q4", "How satisfied are you with your social life in the neighborhood?"),
                q("q5", "Overall, how satisfied are you with living here?"),
            ],
        }
    }

    pub fn load(path: &Path) -> Result<Questionnaire, JudgingError> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            JudgingError::QuestionnaireInvalid(format!("cannot read `{}`: {e}", path.display()))
        })?;
        let q: Questionnaire = serde_json::from_str(&text).map_err(|e| {
            JudgingError::QuestionnaireInvalid(format!("cannot parse `{}`: {e}", path.display()))
        })?;
        if q.questions.is_empty() {
            return Err(JudgingError::QuestionnaireInvalid(
                "questionnaire has no questions".to_string(),
            ));
        }
        Ok(q)
    }
}

#[derive(Debug, Error)]
pub enum JudgingError {
    #[error("NoResidentialArea: accessibility needs at least one residential area")]
    NoResidentialArea,
    #[error("GatewayFailure: {0}")]
    Gateway(#[from] GatewayError),
    #[error("InterviewAborted: {excluded} of {total} residents failed the interview")]
    InterviewAborted { excluded: usize, total: usize },
    #[error("QuestionnaireInvalid: {0}")]
    QuestionnaireInvalid(String),
    #[error("ReportUnreadable: {0}")]
    ReportUnreadable(String),
}

/// Share of residential areas within `radius_m` of each essential
/// category, averaged over the categories, as a percent.
pub fn accessibility(
    plan: &UrbanPlan,
    region: &Region,
    radius_m: f64,
    categories: &[EssentialCategory],
) -> Result<f64, JudgingError> {
    let homes: Vec<&crate::plan::Area> = region.residential_areas().collect();
    if homes.is_empty() {
        return Err(JudgingError::NoResidentialArea);
    }
    let mut coverage_sum = 0.0;
    for category in categories {
        let providers: Vec<&crate::plan::Area> = region
            .areas
            .iter()
            .filter(|a| {
                plan.land_use(&a.id)
                    .is_some_and(|u| category.contains(u))
            })
            .collect();
        let covered = homes
            .iter()
            .filter(|home| {
                providers.iter().any(|p| {
                    let d = ((home.x - p.x).powi(2) + (home.y - p.y).powi(2)).sqrt();
                    d <= radius_m
                })
            })
            .count();
        coverage_sum += covered as f64 / homes.len() as f64;
    }
    Ok(round2(100.0 * coverage_sum / categories.len() as f64))
}

/// Land share (or, optionally, area-count share) of greening land uses,
/// as a percent.
pub fn ecology(plan: &UrbanPlan, region: &Region, by_count: bool) -> f64 {
    let green = |a: &&crate::plan::Area| {
        plan.land_use(&a.id).is_some_and(LandUseType::is_greening)
    };
    let value = if by_count {
        let total = region.areas.len() as f64;
        region.areas.iter().filter(green).count() as f64 / total
    } else {
        let total: f64 = region.areas.iter().map(|a| a.size_m2).sum();
        let green_size: f64 = region.areas.iter().filter(green).map(|a| a.size_m2).sum();
        green_size / total
    };
    round2(100.0 * value)
}

/// Bundle the quantitative metrics. The final environment and the
/// population are accepted for interface stability and reserved for
/// future environment-derived metrics.
pub fn automatic(
    plan: &UrbanPlan,
    final_env: &Environment,
    population: &[ResidentProfile],
    region: &Region,
    config: &JudgingConfig,
) -> Result<QuantScores, JudgingError> {
    log::debug!(
        "automatic metrics: environment at tick {} and {} residents accepted but unused",
        final_env.tick,
        population.len()
    );
    Ok(QuantScores {
        accessibility: accessibility(plan, region, config.radius_m, &config.categories)?,
        ecology: ecology(plan, region, config.ecology_by_count),
    })
}

#[derive(Debug, Deserialize)]
struct AnswerWire {
    question: String,
    score: f64,
    #[serde(default)]
    rationale: String,
}

#[derive(Debug, Deserialize)]
struct AnswersWire {
    #[serde(default)]
    answers: Vec<AnswerWire>,
}

pub struct InterviewOutcome {
    pub score: QualScore,
    pub excluded: Vec<String>,
}

/// One structured `judge.interview` call per resident; scores are clamped
/// into [0, 100]. A failing resident is excluded (logged); more than half
/// excluded aborts.
pub fn interview(
    population: &[ResidentProfile],
    pools: &mut [MemoryPool],
    questionnaire: &Questionnaire,
    memory: &MemoryParams,
    gateway: &Gateway,
    now: u64,
) -> Result<InterviewOutcome, JudgingError> {
    let question_list = questionnaire
        .questions
        .iter()
        .map(|q| format!("{}: {}", q.id, q.text))
        .collect::<Vec<_>>()
        .join("\n");
    let query: String = questionnaire
        .questions
        .iter()
        .map(|q| q.text.as_str())
        .collect::<Vec<_>>()
        .join(" ");
    let mut answers = Vec::new();
    let mut excluded = Vec::new();
    for (i, profile) in population.iter().enumerate() {
        let memories = pools[i].retrieve(&query, 5, now, memory);
        let memory_lines = if memories.is_empty() {
            "(none yet)".to_string()
        } else {
            memories
                .iter()
                .map(|m| format!("- {}", m.text))
                .collect::<Vec<_>>()
                .join("\n")
        };
        let prompt = render(
            include_str!("../prompts/judge_interview.txt"),
            &[
                ("profile", &profile.prompt_block()),
                ("memories", &memory_lines),
                ("questions", &question_list),
            ],
        );
        let parsed: Result<AnswersWire, GatewayError> = gateway.complete_structured(
            &ChatRequest::new("judge.interview", prompt),
            r#"{"answers": [{"question": "<question id>", "score": <0-100>, "rationale": "..."}]}"#,
        );
        match parsed {
            Ok(wire) => {
                for answer in wire.answers {
                    if !questionnaire.questions.iter().any(|q| q.id == answer.question) {
                        log::warn!(
                            "{}: discarding answer for unknown question `{}`",
                            profile.id,
                            answer.question
                        );
                        continue;
                    }
                    let score = if (0.0..=100.0).contains(&answer.score) {
                        answer.score
                    } else {
                        let clamped = answer.score.clamp(0.0, 100.0);
                        log::warn!(
                            "{}: clamping interview score {} to {clamped}",
                            profile.id,
                            answer.score
                        );
                        clamped
                    };
                    answers.push(InterviewAnswer {
                        resident: profile.id.clone(),
                        question: answer.question,
                        score,
                        rationale: answer.rationale,
                    });
                }
            }
            Err(err) => {
                log::warn!("excluding {} from the interview: {err}", profile.id);
                excluded.push(profile.id.clone());
                if excluded.len() * 2 > population.len() {
                    return Err(JudgingError::InterviewAborted {
                        excluded: excluded.len(),
                        total: population.len(),
                    });
                }
            }
        }
    }
    let experience = if answers.is_empty() {
        log::warn!("interview produced no scores at all");
        0.0
    } else {
        round2(answers.iter().map(|a| a.score).sum::<f64>() / answers.len() as f64)
    };
    Ok(InterviewOutcome {
        score: QualScore {
            experience,
            answers,
        },
        excluded,
    })
}

/// Unweighted mean of accessibility, ecology and experience (or the
/// pairwise variant behind the config switch), as a percent.
pub fn overall(quant: &QuantScores, qual: &QualScore, pairwise: bool) -> f64 {
    if pairwise {
        round2(((quant.accessibility + quant.ecology) / 2.0 + qual.experience) / 2.0)
    } else {
        round2((quant.accessibility + quant.ecology + qual.experience) / 3.0)
    }
}

#[derive(Debug, Deserialize)]
struct SuggestionWire {
    target: String,
    proposed: String,
    #[serde(default)]
    rationale: String,
}

#[derive(Debug, Deserialize)]
struct SuggestionsWire {
    #[serde(default)]
    items: Vec<SuggestionWire>,
}

/// One structured `judge.suggest` call over the scores, the ten
/// lowest-scoring rationales and the plan. Targets that do not resolve to
/// an area are demoted to category level.
pub fn suggest(
    quant: &QuantScores,
    qual: &QualScore,
    plan: &UrbanPlan,
    region: &Region,
    gateway: &Gateway,
) -> Result<SuggestionList, JudgingError> {
    let mut ranked: Vec<&InterviewAnswer> = qual.answers.iter().collect();
    ranked.sort_by(|a, b| a.score.partial_cmp(&b.score).unwrap());
    let rationales = if ranked.is_empty() {
        "(no interview answers)".to_string()
    } else {
        ranked
            .iter()
            .take(10)
            .map(|a| format!("- {} on {} ({:.0}): {}", a.resident, a.question, a.score, a.rationale))
            .collect::<Vec<_>>()
            .join("\n")
    };
    let plan_lines = plan
        .assignment
        .iter()
        .map(|(id, u)| format!("{id}: {u}"))
        .collect::<Vec<_>>()
        .join("\n");
    let region_lines = region
        .areas
        .iter()
        .map(|a| format!("{} ({}{})", a.id, a.land_use, if a.fixed { ", fixed" } else { "" }))
        .collect::<Vec<_>>()
        .join("\n");
    let prompt = render(
        include_str!("../prompts/judge_suggest.txt"),
        &[
            ("iteration", &plan.iteration.to_string()),
            ("accessibility", &format!("{:.2}", quant.accessibility)),
            ("ecology", &format!("{:.2}", quant.ecology)),
            ("experience", &format!("{:.2}", qual.experience)),
            ("rationales", &rationales),
            ("plan", &plan_lines),
            ("region", &region_lines),
        ],
    );
    let wire: SuggestionsWire = gateway.complete_structured(
        &ChatRequest::new("judge.suggest", prompt),
        r#"{"items": [{"target": "<area id or category>", "proposed": "<land use or change>", "rationale": "..."}]}"#,
    )?;
    let items = wire
        .items
        .into_iter()
        .map(|item| {
            let target = if region.area(&item.target).is_some() {
                Target::Area(item.target)
            } else {
                log::warn!(
                    "suggestion target `{}` is not an area; demoting to category level",
                    item.target
                );
                Target::Category(item.target)
            };
            let proposed = match LandUseType::parse_loose(&item.proposed) {
                Some(u) => Proposed::LandUse(u),
                None => Proposed::FreeText(item.proposed),
            };
            Suggestion {
                target,
                proposed,
                rationale: item.rationale,
            }
        })
        .collect();
    Ok(SuggestionList { items })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::gateway::Script;
    use crate::plan::Area;
    use proptest::prelude::*;
    use std::collections::BTreeMap;

    fn assigned_fixture() -> (Region, UrbanPlan) {
        let region = fixtures::region_12();
        let p0 = UrbanPlan::init(&region);
        // One provider of every essential category within 500 m of all homes.
        let plan = p0
            .apply(
                &region,
                &[
                    ("a_6".to_string(), LandUseType::Commercial),
                    ("a_7".to_string(), LandUseType::School),
                    ("a_8".to_string(), LandUseType::Hospital),
                    ("a_10".to_string(), LandUseType::Park),
                    ("a_11".to_string(), LandUseType::Recreation),
                ],
            )
            .unwrap();
        (region, plan)
    }

    #[test]
    fn full_coverage_scores_one_hundred() {
        // Compact region: every area within 500 m of every home.
        let area = |id: &str, x: f64, y: f64, u: LandUseType| Area {
            id: id.to_string(),
            x,
            y,
            size_m2: 1000.0,
            land_use: u,
            fixed: u == LandUseType::Residential,
        };
        let region = Region {
            name: "tiny".to_string(),
            extent: crate::plan::Extent {
                min_x: 0.0,
                min_y: 0.0,
                max_x: 400.0,
                max_y: 400.0,
            },
            areas: vec![
                area("h_1", 0.0, 0.0, LandUseType::Residential),
                area("s_1", 100.0, 0.0, LandUseType::Commercial),
                area("s_2", 0.0, 100.0, LandUseType::School),
                area("s_3", 100.0, 100.0, LandUseType::Clinic),
                area("s_4", 200.0, 0.0, LandUseType::OpenSpace),
                area("s_5", 200.0, 100.0, LandUseType::Recreation),
            ],
        };
        let mut plan = UrbanPlan::init(&region);
        for a in &region.areas {
            plan.assignment.insert(a.id.clone(), a.land_use);
        }
        let got = accessibility(&plan, &region, 500.0, &essential_categories()).unwrap();
        assert_eq!(got, 100.0);
    }

    #[test]
    fn single_category_coverage_scores_twenty() {
        let area = |id: &str, x: f64, u: LandUseType| Area {
            id: id.to_string(),
            x,
            y: 0.0,
            size_m2: 1000.0,
            land_use: u,
            fixed: u == LandUseType::Residential,
        };
        let region = Region {
            name: "pair".to_string(),
            extent: crate::plan::Extent {
                min_x: 0.0,
                min_y: 0.0,
                max_x: 400.0,
                max_y: 400.0,
            },
            areas: vec![
                area("h_1", 0.0, LandUseType::Residential),
                area("s_1", 100.0, LandUseType::Commercial),
            ],
        };
        let mut plan = UrbanPlan::init(&region);
        plan.assignment
            .insert("s_1".to_string(), LandUseType::Commercial);
        // One of five categories covered: brute force over all pairs agrees.
        let got = accessibility(&plan, &region, 500.0, &essential_categories()).unwrap();
        assert_eq!(got, 20.0);
    }

    #[test]
    fn all_vacant_plannables_score_zero() {
        let region = fixtures::region_12();
        let plan = UrbanPlan::init(&region);
        let got = accessibility(&plan, &region, 500.0, &essential_categories()).unwrap();
        assert_eq!(got, 0.0);
        assert_eq!(ecology(&plan, &region, false), 0.0);
    }

    #[test]
    fn no_residential_area_fails_accessibility() {
        let mut region = fixtures::region_12();
        for a in &mut region.areas {
            a.land_use = LandUseType::Vacant;
            a.fixed = false;
        }
        let plan = UrbanPlan::init(&region);
        let err = accessibility(&plan, &region, 500.0, &essential_categories()).unwrap_err();
        assert!(matches!(err, JudgingError::NoResidentialArea));
    }

    #[test]
    fn ecology_counts_land_share() {
        let region = fixtures::region_12();
        let p0 = UrbanPlan::init(&region);
        assert_eq!(ecology(&p0, &region, false), 0.0);

        let all_park: Vec<(String, LandUseType)> = region
            .areas
            .iter()
            .filter(|a| !a.fixed)
            .map(|a| (a.id.clone(), LandUseType::Park))
            .collect();
        let mut green = p0.apply(&region, &all_park).unwrap();
        for a in region.areas.iter().filter(|a| a.fixed) {
            // Hypothetical all-park region for the upper bound.
            green.assignment.insert(a.id.clone(), LandUseType::Park);
        }
        assert_eq!(ecology(&green, &region, false), 100.0);

        // Equal sizes: 3 of 12 open space is exactly a quarter.
        let three = p0
            .apply(
                &region,
                &[
                    ("a_6".to_string(), LandUseType::OpenSpace),
                    ("a_7".to_string(), LandUseType::OpenSpace),
                    ("a_8".to_string(), LandUseType::OpenSpace),
                ],
            )
            .unwrap();
        assert_eq!(ecology(&three, &region, false), 25.0);
    }

    #[test]
    fn automatic_bundles_the_two_metrics() {
        let (region, plan) = assigned_fixture();
        let env = Environment {
            tick: 1440,
            physical: BTreeMap::new(),
            feed: crate::living::SocialFeed::default(),
        };
        let population = fixtures::stub_population(2);
        let config = JudgingConfig::default();
        let quant = automatic(&plan, &env, &population, &region, &config).unwrap();
        assert_eq!(
            quant.accessibility,
            accessibility(&plan, &region, 500.0, &config.categories).unwrap()
        );
        assert_eq!(quant.ecology, ecology(&plan, &region, false));
        // Round-trips through the report file.
        let report = JudgeReport {
            iteration: 1,
            quant,
            qual: QualScore {
                experience: 50.0,
                answers: Vec::new(),
            },
            overall: overall(
                &quant,
                &QualScore {
                    experience: 50.0,
                    answers: Vec::new(),
                },
                false,
            ),
            suggestions: SuggestionList::default(),
        };
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("report.json");
        report.save(&path).unwrap();
        assert_eq!(JudgeReport::load(&path).unwrap(), report);
    }

    fn single_question() -> Questionnaire {
        Questionnaire {
            questions: vec![Question {
                id: "q1".to_string(),
                text: "How is it going?".to_string(),
            }],
        }
    }

    #[test]
    fn interview_means_the_scores() {
        let population = fixtures::stub_population(2);
        let mut pools = vec![MemoryPool::new(), MemoryPool::new()];
        let gateway = Gateway::scripted(Script::new().entry(
            "judge.interview",
            [
                r#"{"answers":[{"question":"q1","score":70,"rationale":"fine"}]}"#,
                r#"{"answers":[{"question":"q1","score":60,"rationale":"okay"}]}"#,
            ],
        ));
        let outcome = interview(
            &population,
            &mut pools,
            &single_question(),
            &MemoryParams::default(),
            &gateway,
            100,
        )
        .unwrap();
        assert_eq!(outcome.score.experience, 65.0);
        assert_eq!(outcome.score.answers.len(), 2);
        assert!(outcome.excluded.is_empty());
    }

    #[test]
    fn out_of_range_scores_are_clamped() {
        let population = fixtures::stub_population(1);
        let mut pools = vec![MemoryPool::new()];
        let gateway = Gateway::scripted(Script::new().entry(
            "judge.interview",
            [r#"{"answers":[{"question":"q1","score":105,"rationale":"very"}]}"#],
        ));
        let outcome = interview(
            &population,
            &mut pools,
            &single_question(),
            &MemoryParams::default(),
            &gateway,
            100,
        )
        .unwrap();
        assert_eq!(outcome.score.answers[0].score, 100.0);
        assert_eq!(outcome.score.experience, 100.0);
    }

    #[test]
    fn thirty_residents_five_questions_match_a_hand_mean() {
        let population = fixtures::stub_population(30);
        let mut pools: Vec<MemoryPool> = (0..30).map(|_| MemoryPool::new()).collect();
        // Every resident answers the same five scores.
        let scores = [60.0, 62.0, 65.0, 68.0, 71.0];
        let response = format!(
            r#"{{"answers":[
                {{"question":"q1","score":{},"rationale":"r"}},
                {{"question":"q2","score":{},"rationale":"r"}},
                {{"question":"q3","score":{},"rationale":"r"}},
                {{"question":"q4","score":{},"rationale":"r"}},
                {{"question":"q5","score":{},"rationale":"r"}}]}}"#,
            scores[0], scores[1], scores[2], scores[3], scores[4]
        );
        let gateway = Gateway::scripted(Script::new().cycled("judge.interview", [response]));
        let outcome = interview(
            &population,
            &mut pools,
            &Questionnaire::default_five(),
            &MemoryParams::default(),
            &gateway,
            100,
        )
        .unwrap();
        // Independent summation over all 150 collected scores.
        let mut total = 0.0;
        let mut count = 0;
        for _ in 0..30 {
            for s in scores {
                total += s;
                count += 1;
            }
        }
        assert_eq!(count, 150);
        assert_eq!(outcome.score.answers.len(), 150);
        assert_eq!(outcome.score.experience, round2(total / count as f64));
    }

    #[test]
    fn failing_majority_aborts_the_interview() {
        let population = fixtures::stub_population(3);
        let mut pools: Vec<MemoryPool> = (0..3).map(|_| MemoryPool::new()).collect();
        let gateway = Gateway::scripted(Script::new().entry(
            "judge.interview",
            [r#"{"answers":[{"question":"q1","score":50,"rationale":"r"}]}"#],
        ));
        let err = interview(
            &population,
            &mut pools,
            &single_question(),
            &MemoryParams::default(),
            &gateway,
            100,
        )
        .unwrap_err();
        assert!(matches!(err, JudgingError::InterviewAborted { excluded: 2, total: 3 }));
    }

    #[test]
    fn overall_matches_the_reported_row() {
        let quant = QuantScores {
            accessibility: 65.00,
            ecology: 73.33,
        };
        let qual = QualScore {
            experience: 65.03,
            answers: Vec::new(),
        };
        assert_eq!(overall(&quant, &qual, false), 67.79);
        let zero = QualScore {
            experience: 0.0,
            answers: Vec::new(),
        };
        assert_eq!(
            overall(&QuantScores { accessibility: 0.0, ecology: 0.0 }, &zero, false),
            0.0
        );
        let full = QualScore {
            experience: 100.0,
            answers: Vec::new(),
        };
        assert_eq!(
            overall(
                &QuantScores {
                    accessibility: 100.0,
                    ecology: 100.0
                },
                &full,
                false
            ),
            100.0
        );
    }

    #[test]
    fn suggestion_targets_resolve_or_demote() {
        let (region, plan) = assigned_fixture();
        let quant = QuantScores {
            accessibility: 40.0,
            ecology: 0.0,
        };
        let qual = QualScore {
            experience: 55.0,
            answers: vec![InterviewAnswer {
                resident: "R_1".to_string(),
                question: "q3".to_string(),
                score: 30.0,
                rationale: "no green space anywhere".to_string(),
            }],
        };
        let gateway = Gateway::scripted(Script::new().entry(
            "judge.suggest",
            [r#"{"items":[
                {"target":"a_12","proposed":"open_space","rationale":"residents want green space near homes"},
                {"target":"a_99","proposed":"park","rationale":"mystery area"},
                {"target":"greening","proposed":"add pocket parks","rationale":"general"}]}"#],
        ));
        let got = suggest(&quant, &qual, &plan, &region, &gateway).unwrap();
        assert_eq!(got.items.len(), 3);
        assert_eq!(got.items[0].target, Target::Area("a_12".to_string()));
        assert_eq!(
            got.items[0].proposed,
            Proposed::LandUse(LandUseType::OpenSpace)
        );
        assert_eq!(got.items[1].target, Target::Category("a_99".to_string()));
        assert_eq!(got.items[2].target, Target::Category("greening".to_string()));
        assert!(matches!(got.items[2].proposed, Proposed::FreeText(_)));
        // The prompt carried the low rationale.
        let prompt = &gateway.audit_entries()[0].prompt;
        assert!(prompt.contains("no green space anywhere"));
    }

    #[test]
    fn empty_suggestion_list_is_fine() {
        let (region, plan) = assigned_fixture();
        let quant = QuantScores {
            accessibility: 80.0,
            ecology: 20.0,
        };
        let qual = QualScore {
            experience: 70.0,
            answers: Vec::new(),
        };
        let gateway =
            Gateway::scripted(Script::new().entry("judge.suggest", [r#"{"items":[]}"#]));
        let got = suggest(&quant, &qual, &plan, &region, &gateway).unwrap();
        assert!(got.items.is_empty());
    }

    proptest! {
        #[test]
        fn overall_is_the_exact_mean_and_symmetric(
            a in 0.0f64..100.0,
            b in 0.0f64..100.0,
            c in 0.0f64..100.0,
        ) {
            let qual = |x: f64| QualScore { experience: x, answers: Vec::new() };
            let got = overall(&QuantScores { accessibility: a, ecology: b }, &qual(c), false);
            prop_assert_eq!(got, round2((a + b + c) / 3.0));
            let swapped = overall(&QuantScores { accessibility: b, ecology: a }, &qual(c), false);
            prop_assert_eq!(got, swapped);
            let rotated = overall(&QuantScores { accessibility: c, ecology: b }, &qual(a), false);
            prop_assert_eq!(got, rotated);
        }

        #[test]
        fn ecology_ignores_order_and_uniform_scaling(
            greens in proptest::collection::btree_set(0usize..12, 0..8),
            scale in 0.1f64..100.0,
            seed in 0u64..1000,
        ) {
            let region = fixtures::region_12();
            let p0 = UrbanPlan::init(&region);
            let changes: Vec<(String, LandUseType)> = greens
                .iter()
                .filter(|i| !region.areas[**i].fixed)
                .map(|i| (region.areas[*i].id.clone(), LandUseType::Park))
                .collect();
            let plan = p0.apply(&region, &changes).unwrap();
            let base = ecology(&plan, &region, false);

            let mut scaled = region.clone();
            for a in &mut scaled.areas {
                a.size_m2 *= scale;
            }
            prop_assert_eq!(ecology(&plan, &scaled, false), base);

            let mut shuffled = region.clone();
            let mut rng = crate::util::phase_rng(seed, 0, "shuffle");
            use rand::seq::SliceRandom;
            shuffled.areas.shuffle(&mut rng);
            prop_assert_eq!(ecology(&plan, &shuffled, false), base);
        }
    }
}
