//! Tick-based simulation of one day.
//!
//! Every tick, each resident reads the previous tick's environment
//! snapshot, optionally decides a new action (at day start, dwell expiry
//! or when the decision horizon elapses), and moves toward its target at
//! constant speed. A synchronous barrier then merges all locations and
//! social actions into the next snapshot, so nothing emitted at tick `t`
//! is ever observable at tick `t`.

mod agent;

pub use agent::Observation;

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gateway::{Gateway, GatewayError};
use crate::memory::{MemoryParams, MemoryPool};
use crate::plan::{PlanError, Region, UrbanPlan};
use crate::profile::ResidentProfile;

/// Knobs for one simulated day. One tick is one minute.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimConfig {
    pub ticks_per_day: u64,
    /// Forced re-decision interval while not traveling.
    pub decision_horizon: u64,
    /// Unseen feed posts surfaced per perception.
    pub perceive_feed_k: usize,
    /// Travel speed in meters per tick.
    pub speed: f64,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            ticks_per_day: 1440,
            decision_horizon: 60,
            perceive_feed_k: 5,
            speed: 80.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comment {
    pub author: String,
    pub tick: u64,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Post {
    pub id: String,
    pub author: String,
    pub tick: u64,
    pub text: String,
    #[serde(default)]
    pub comments: Vec<Comment>,
}

/// Append-only feed; post ids are `p_1, p_2, ...` in creation order.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SocialFeed {
    pub posts: Vec<Post>,
}

impl SocialFeed {
    pub fn post(&self, id: &str) -> Option<&Post> {
        self.posts.iter().find(|p| p.id == id)
    }
}

/// Snapshot of physical occupancy and the social feed at one tick.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Environment {
    pub tick: u64,
    pub physical: BTreeMap<String, String>,
    pub feed: SocialFeed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SocialAction {
    Post { text: String },
    Comment { post_id: String, text: String },
}

/// One decided behavior: where to be, from when, for how long, and an
/// optional social action emitted at the departure tick.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActionPlan {
    pub intent: String,
    pub target: String,
    pub depart: u64,
    pub dwell: u64,
    pub social: Option<SocialAction>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MobilityRecord {
    pub tick: u64,
    pub resident: String,
    pub area: String,
}

/// Continuous position sample kept in memory for invariant checks; never
/// part of the persisted day outputs.
#[derive(Debug, Clone, PartialEq)]
pub struct PositionSample {
    pub resident: String,
    pub tick: u64,
    pub x: f64,
    pub y: f64,
}

/// Which posts one resident saw at one perception, for the
/// synchronous-update checks; never persisted.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservedPosts {
    pub resident: String,
    pub tick: u64,
    pub post_ids: Vec<String>,
}

/// Everything one simulated day produced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DayLog {
    pub mobility: Vec<MobilityRecord>,
    pub feed: SocialFeed,
    pub degraded_decisions: u32,
    #[serde(skip)]
    pub positions: Vec<PositionSample>,
    #[serde(skip)]
    pub observations: Vec<ObservedPosts>,
}

#[derive(Debug, Error)]
pub enum LivingError {
    #[error("MissingResidentLocation: sync received no location for `{0}`")]
    MissingResidentLocation(String),
    #[error("InvalidAction: decision names unknown target area `{0}`")]
    InvalidAction(String),
    #[error("GatewayFailure: {0}")]
    Gateway(#[from] GatewayError),
    #[error("{0}")]
    Plan(#[from] PlanError),
    #[error("PopulationMismatch: {0}")]
    PopulationMismatch(String),
}

/// Merge all locations and social actions into the next snapshot.
///
/// `socials` must arrive in resident-index order; posts get fresh ids in
/// that order, so two posts in the same tick keep the lower-index author
/// first. Comments on posts that do not exist (yet) are dropped.
pub fn sync(
    prev: Environment,
    locations: BTreeMap<String, String>,
    socials: Vec<(String, SocialAction)>,
    population_ids: &[String],
) -> Result<Environment, LivingError> {
    for id in population_ids {
        if !locations.contains_key(id) {
            return Err(LivingError::MissingResidentLocation(id.clone()));
        }
    }
    let tick = prev.tick + 1;
    let mut feed = prev.feed;
    for (author, action) in socials {
        match action {
            SocialAction::Post { text } => {
                let id = format!("p_{}", feed.posts.len() + 1);
                feed.posts.push(Post {
                    id,
                    author,
                    tick,
                    text,
                    comments: Vec::new(),
                });
            }
            SocialAction::Comment { post_id, text } => {
                match feed.posts.iter_mut().find(|p| p.id == post_id) {
                    Some(post) => post.comments.push(Comment { author, tick, text }),
                    None => log::warn!("dropping comment by {author} on unknown post {post_id}"),
                }
            }
        }
    }
    Ok(Environment {
        tick,
        physical: locations,
        feed,
    })
}

pub struct DayArgs<'a> {
    pub region: &'a Region,
    pub plan: &'a UrbanPlan,
    pub population: &'a [ResidentProfile],
    pub pools: &'a mut [MemoryPool],
    pub gateway: &'a Gateway,
    pub config: &'a SimConfig,
    pub memory: &'a MemoryParams,
    /// Global tick of this day's start; memory timestamps stay monotone
    /// across iterations.
    pub day_offset: u64,
}

/// Simulate ticks `1..=T`. Residents start the day at home; decision
/// failures degrade to stay-in-place and never abort the day.
pub fn run_day(args: DayArgs<'_>) -> Result<DayLog, LivingError> {
    let DayArgs {
        region,
        plan,
        population,
        pools,
        gateway,
        config,
        memory,
        day_offset,
    } = args;
    if population.is_empty() {
        return Err(LivingError::PopulationMismatch(
            "population is empty".to_string(),
        ));
    }
    if pools.len() != population.len() {
        return Err(LivingError::PopulationMismatch(format!(
            "{} profiles but {} memory pools",
            population.len(),
            pools.len()
        )));
    }
    let ids: Vec<String> = population.iter().map(|p| p.id.clone()).collect();
    let mut physical = BTreeMap::new();
    let mut agents = Vec::with_capacity(population.len());
    for profile in population {
        let home = region.require_area(&profile.home_area)?;
        physical.insert(profile.id.clone(), home.id.clone());
        agents.push(agent::AgentState::new(profile, home));
    }
    let mut env = Environment {
        tick: 0,
        physical,
        feed: SocialFeed::default(),
    };

    let ticks = config.ticks_per_day;
    let mut log = DayLog {
        mobility: Vec::with_capacity((ticks as usize) * population.len()),
        feed: SocialFeed::default(),
        degraded_decisions: 0,
        positions: Vec::with_capacity((ticks as usize) * population.len()),
        observations: Vec::new(),
    };

    for tick in 1..=ticks {
        gateway.set_tick(Some(day_offset + tick));
        let mut locations = BTreeMap::new();
        let mut socials = Vec::new();
        for (i, state) in agents.iter_mut().enumerate() {
            let out = state.step(agent::StepContext {
                tick,
                env: &env,
                region,
                plan,
                gateway,
                pool: &mut pools[i],
                config,
                memory,
                day_offset,
            })?;
            if out.degraded {
                log.degraded_decisions += 1;
            }
            if let Some(post_ids) = out.observed_posts {
                log.observations.push(ObservedPosts {
                    resident: ids[i].clone(),
                    tick,
                    post_ids,
                });
            }
            log.mobility.push(MobilityRecord {
                tick,
                resident: ids[i].clone(),
                area: out.area.clone(),
            });
            log.positions.push(PositionSample {
                resident: ids[i].clone(),
                tick,
                x: out.x,
                y: out.y,
            });
            locations.insert(ids[i].clone(), out.area);
            if let Some(action) = out.social {
                socials.push((ids[i].clone(), action));
            }
        }
        env = sync(env, locations, socials, &ids)?;
    }
    gateway.set_tick(None);
    log.feed = env.feed;
    Ok(log)
}

/// Write a day log the way all consumers read it: `mobility.jsonl`,
/// `feed.json` and one `memories/R_i.jsonl` per resident.
pub fn persist_day(
    dir: &Path,
    log: &DayLog,
    population: &[ResidentProfile],
    pools: &[MemoryPool],
) -> std::io::Result<()> {
    std::fs::create_dir_all(dir.join("memories"))?;
    let mut mobility = std::io::BufWriter::new(std::fs::File::create(dir.join("mobility.jsonl"))?);
    for record in &log.mobility {
        let line = serde_json::to_string(record).expect("record serializes");
        writeln!(mobility, "{line}")?;
    }
    mobility.flush()?;
    let mut feed = serde_json::to_string_pretty(&log.feed).expect("feed serializes");
    feed.push('\n');
    std::fs::write(dir.join("feed.json"), feed)?;
    for (profile, pool) in population.iter().zip(pools) {
        let file = std::fs::File::create(dir.join("memories").join(format!("{}.jsonl", profile.id)))?;
        pool.dump_jsonl(std::io::BufWriter::new(file))?;
    }
    Ok(())
}
