//! Per-resident runtime: perceive, decide, move.

use std::collections::BTreeSet;

use serde::Deserialize;

use super::{ActionPlan, Environment, LivingError, Post, SimConfig, SocialAction};
use crate::gateway::{ChatRequest, Gateway};
use crate::memory::{MemoryEntry, MemoryKind, MemoryParams, MemoryPool};
use crate::plan::{Area, LandUseType, Region, UrbanPlan};
use crate::profile::ResidentProfile;
use crate::util::render;

/// What one resident notices at a decision point, all read from the
/// previous tick's snapshot.
#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    pub tick: u64,
    pub area: String,
    pub land_use: LandUseType,
    pub nearby: Vec<(String, LandUseType)>,
    pub co_located: Vec<String>,
    pub posts: Vec<Post>,
}

impl Observation {
    fn render(&self) -> ObservationText {
        let nearby = self
            .nearby
            .iter()
            .map(|(id, u)| format!("{id} ({u})"))
            .collect::<Vec<_>>()
            .join(", ");
        let co_located = if self.co_located.is_empty() {
            "(nobody)".to_string()
        } else {
            self.co_located.join(", ")
        };
        let posts = if self.posts.is_empty() {
            "(none)".to_string()
        } else {
            self.posts
                .iter()
                .map(|p| {
                    let mut line = format!("{} [{} at minute {}]: {}", p.id, p.author, p.tick, p.text);
                    for c in &p.comments {
                        line.push_str(&format!("\n  reply by {}: {}", c.author, c.text));
                    }
                    line
                })
                .collect::<Vec<_>>()
                .join("\n")
        };
        ObservationText {
            nearby,
            co_located,
            posts,
        }
    }
}

struct ObservationText {
    nearby: String,
    co_located: String,
    posts: String,
}

pub(super) struct StepContext<'a, 'b> {
    pub tick: u64,
    pub env: &'a Environment,
    pub region: &'a Region,
    pub plan: &'a UrbanPlan,
    pub gateway: &'a Gateway,
    pub pool: &'b mut MemoryPool,
    pub config: &'a SimConfig,
    pub memory: &'a MemoryParams,
    pub day_offset: u64,
}

pub(super) struct StepOutcome {
    pub area: String,
    pub x: f64,
    pub y: f64,
    pub social: Option<SocialAction>,
    pub observed_posts: Option<Vec<String>>,
    pub degraded: bool,
}

pub(super) struct AgentState<'a> {
    profile: &'a ResidentProfile,
    pos: (f64, f64),
    current_area: String,
    action: Option<ActionPlan>,
    arrived_at: Option<u64>,
    social_emitted: bool,
    last_decision: u64,
    needs_decision: bool,
    seen_posts: BTreeSet<String>,
}

impl<'a> AgentState<'a> {
    pub(super) fn new(profile: &'a ResidentProfile, home: &Area) -> AgentState<'a> {
        AgentState {
            profile,
            pos: home.centroid(),
            current_area: home.id.clone(),
            action: None,
            arrived_at: None,
            social_emitted: false,
            last_decision: 0,
            needs_decision: true,
            seen_posts: BTreeSet::new(),
        }
    }

    fn traveling(&self, tick: u64) -> bool {
        match &self.action {
            Some(p) => tick >= p.depart && self.arrived_at.is_none(),
            None => false,
        }
    }

    /// Advance one tick against the previous environment snapshot.
    pub(super) fn step(&mut self, ctx: StepContext<'_, '_>) -> Result<StepOutcome, LivingError> {
        let tick = ctx.tick;
        let now = ctx.day_offset + tick;
        let mut observed_posts = None;
        let mut degraded = false;

        let dwell_expired = match (&self.action, self.arrived_at) {
            (Some(p), Some(at)) => tick >= at + p.dwell,
            _ => false,
        };
        let horizon_hit = !self.traveling(tick)
            && tick.saturating_sub(self.last_decision) >= ctx.config.decision_horizon;
        if self.needs_decision || dwell_expired || horizon_hit {
            let observation = self.perceive(&ctx, now);
            observed_posts = Some(observation.posts.iter().map(|p| p.id.clone()).collect());
            let decision = self.decide(&ctx, &observation, now);
            let plan = match decision {
                Ok(plan) => plan,
                Err(err) => {
                    log::warn!("{}: degraded decision at tick {tick}: {err}", self.profile.id);
                    degraded = true;
                    let fallback = ActionPlan {
                        intent: "stay in place (degraded)".to_string(),
                        target: self.current_area.clone(),
                        depart: tick,
                        dwell: ctx.config.decision_horizon.max(1),
                        social: None,
                    };
                    self.log_memory(
                        ctx.pool,
                        MemoryKind::Behavior,
                        format!("stayed in place at {} after a failed decision", self.current_area),
                        now,
                        ctx.memory.behavior_importance,
                    );
                    fallback
                }
            };
            self.action = Some(plan);
            self.arrived_at = None;
            self.social_emitted = false;
            self.last_decision = tick;
            self.needs_decision = false;

            if ctx.pool.should_reflect(ctx.memory) {
                if let Err(err) =
                    ctx.pool
                        .reflect(&self.profile.prompt_block(), ctx.gateway, now, ctx.memory)
                {
                    log::warn!("{}: reflection failed: {err}", self.profile.id);
                }
            }
        }

        // Movement toward the target centroid at the speed bound.
        let mut arrived_now = false;
        if let Some(plan) = &self.action {
            if tick >= plan.depart && self.arrived_at.is_none() {
                let target = ctx.region.require_area(&plan.target)?;
                let (tx, ty) = target.centroid();
                let dx = tx - self.pos.0;
                let dy = ty - self.pos.1;
                let dist = (dx * dx + dy * dy).sqrt();
                if dist <= ctx.config.speed {
                    self.pos = (tx, ty);
                    self.arrived_at = Some(tick);
                    arrived_now = true;
                } else {
                    let scale = ctx.config.speed / dist;
                    self.pos = (self.pos.0 + dx * scale, self.pos.1 + dy * scale);
                }
            }
        }

        let prev_area = self.current_area.clone();
        let here = ctx.region.area_at(self.pos.0, self.pos.1);
        self.current_area = here.id.clone();
        if arrived_now && self.current_area != prev_area {
            let land_use = ctx
                .plan
                .land_use(&self.current_area)
                .unwrap_or(LandUseType::Vacant);
            self.log_memory(
                ctx.pool,
                MemoryKind::Event,
                format!("arrived at {} ({land_use})", self.current_area),
                now,
                ctx.memory.event_importance,
            );
        }

        let mut social = None;
        if let Some(plan) = &self.action {
            if !self.social_emitted && tick == plan.depart {
                if let Some(action) = &plan.social {
                    social = Some(action.clone());
                    self.social_emitted = true;
                }
            }
        }

        Ok(StepOutcome {
            area: self.current_area.clone(),
            x: self.pos.0,
            y: self.pos.1,
            social,
            observed_posts,
            degraded,
        })
    }

    /// Read the snapshot: own area and land use, the three nearest areas,
    /// co-located residents, and the newest unseen posts (own posts are
    /// skipped). New posts become remembered events.
    fn perceive(&mut self, ctx: &StepContext<'_, '_>, now: u64) -> Observation {
        let my_area = ctx
            .env
            .physical
            .get(&self.profile.id)
            .cloned()
            .unwrap_or_else(|| self.current_area.clone());
        let land_use = ctx.plan.land_use(&my_area).unwrap_or(LandUseType::Vacant);
        let nearby = ctx
            .region
            .nearest_areas(&my_area, 3)
            .unwrap_or_default()
            .into_iter()
            .map(|a| {
                let u = ctx.plan.land_use(&a.id).unwrap_or(LandUseType::Vacant);
                (a.id.clone(), u)
            })
            .collect();
        let co_located: Vec<String> = ctx
            .env
            .physical
            .iter()
            .filter(|(rid, aid)| **aid == my_area && rid.as_str() != self.profile.id)
            .map(|(rid, _)| rid.clone())
            .collect();

        let mut posts = Vec::new();
        for post in ctx.env.feed.posts.iter().rev() {
            if posts.len() >= ctx.config.perceive_feed_k {
                break;
            }
            if post.author == self.profile.id {
                self.seen_posts.insert(post.id.clone());
                continue;
            }
            if self.seen_posts.contains(&post.id) {
                continue;
            }
            posts.push(post.clone());
        }
        for post in &posts {
            self.seen_posts.insert(post.id.clone());
            self.log_memory(
                ctx.pool,
                MemoryKind::Event,
                format!("saw a post by {}: {}", post.author, post.text),
                now,
                ctx.memory.event_importance,
            );
        }

        Observation {
            tick: ctx.env.tick,
            area: my_area,
            land_use,
            nearby,
            co_located,
            posts,
        }
    }

    /// One gateway call (`live.decide`) over profile, retrieved memories
    /// and the observation; the decision is remembered as a behavior.
    fn decide(
        &mut self,
        ctx: &StepContext<'_, '_>,
        observation: &Observation,
        now: u64,
    ) -> Result<ActionPlan, LivingError> {
        let rendered = observation.render();
        let query = format!(
            "{} {} {}",
            observation.land_use, rendered.nearby, rendered.posts
        );
        let memories = ctx.pool.retrieve(&query, 5, now, ctx.memory);
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
            include_str!("../../prompts/live_decide.txt"),
            &[
                ("profile", &self.profile.prompt_block()),
                ("tick", &ctx.tick.to_string()),
                ("area", &observation.area),
                ("land_use", observation.land_use.label()),
                ("nearby", &rendered.nearby),
                ("co_located", &rendered.co_located),
                ("posts", &rendered.posts),
                ("memories", &memory_lines),
            ],
        );
        let request = ChatRequest::new("live.decide", prompt);
        let response: DecideResponse = ctx.gateway.complete_structured(
            &request,
            r#"{"intent": "...", "target": "<area id or omit>", "depart_in": 0, "dwell": 60, "social": {"kind": "post"|"comment"|"none", "text": "...", "post_id": "..."}}"#,
        )?;

        let target = match response.target.filter(|t| !t.trim().is_empty()) {
            Some(t) => {
                if ctx.region.area(&t).is_none() {
                    return Err(LivingError::InvalidAction(t));
                }
                t
            }
            None => observation.area.clone(),
        };
        let social = response.social.and_then(|s| s.into_action());
        let plan = ActionPlan {
            intent: response.intent,
            target,
            depart: ctx.tick + response.depart_in,
            dwell: response.dwell.max(1),
            social,
        };
        let mut note = format!(
            "decided to be at {} for {} minutes ({})",
            plan.target,
            plan.dwell,
            if plan.intent.is_empty() {
                "no stated intent"
            } else {
                &plan.intent
            }
        );
        match &plan.social {
            Some(SocialAction::Post { text }) => {
                note.push_str(&format!("; posted: {text}"));
            }
            Some(SocialAction::Comment { post_id, text }) => {
                note.push_str(&format!("; commented on {post_id}: {text}"));
            }
            None => {}
        }
        self.log_memory(
            ctx.pool,
            MemoryKind::Behavior,
            note,
            now,
            ctx.memory.behavior_importance,
        );
        Ok(plan)
    }

    fn log_memory(
        &self,
        pool: &mut MemoryPool,
        kind: MemoryKind,
        text: String,
        now: u64,
        importance: u8,
    ) {
        if let Err(err) = pool.add(MemoryEntry::new(kind, text, now, importance)) {
            log::warn!("{}: dropping memory entry: {err}", self.profile.id);
        }
    }
}

#[derive(Debug, Deserialize)]
struct DecideResponse {
    #[serde(default)]
    intent: String,
    #[serde(default)]
    target: Option<String>,
    #[serde(default)]
    depart_in: u64,
    dwell: u64,
    #[serde(default)]
    social: Option<SocialWire>,
}

#[derive(Debug, Deserialize)]
struct SocialWire {
    kind: String,
    #[serde(default)]
    text: String,
    #[serde(default)]
    post_id: Option<String>,
}

impl SocialWire {
    fn into_action(self) -> Option<SocialAction> {
        match self.kind.as_str() {
            "post" if !self.text.trim().is_empty() => Some(SocialAction::Post { text: self.text }),
            "comment" => match self.post_id {
                Some(post_id) => Some(SocialAction::Comment {
                    post_id,
                    text: self.text,
                }),
                None => {
                    log::warn!("comment without post_id treated as no social action");
                    None
                }
            },
            _ => None,
        }
    }
}
