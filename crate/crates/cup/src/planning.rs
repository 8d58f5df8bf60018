//! The planning phase: the planner drafts from knowledge and the previous
//! iteration's suggestions, residents discuss, the planner finalizes.
//! Also home to the random baseline planner.

use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gateway::{ChatRequest, Gateway, GatewayError};
use crate::judging::SuggestionList;
use crate::memory::{MemoryParams, MemoryPool};
use crate::plan::{LandUseType, PlanError, Region, UrbanPlan};
use crate::profile::ResidentProfile;
use crate::util::render;

/// Curated planning guidance fed to every planner prompt.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlannerKnowledge {
    pub text: String,
}

impl PlannerKnowledge {
    pub fn new(text: impl Into<String>) -> Result<PlannerKnowledge, PlanningError> {
        let text = text.into();
        if text.trim().is_empty() {
            return Err(PlanningError::KnowledgeEmpty);
        }
        Ok(PlannerKnowledge { text })
    }

    pub fn load(path: &Path) -> Result<PlannerKnowledge, PlanningError> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            PlanningError::KnowledgeUnreadable(format!("cannot read `{}`: {e}", path.display()))
        })?;
        PlannerKnowledge::new(text)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Utterance {
    pub resident: String,
    pub text: String,
}

/// Round-robin discussion transcript plus its summary `D_k`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscussionTranscript {
    pub rounds: Vec<Utterance>,
    pub summary: String,
}

impl DiscussionTranscript {
    pub fn save(&self, path: &Path) -> std::io::Result<()> {
        let mut text = serde_json::to_string_pretty(self).expect("transcript serializes");
        text.push('\n');
        std::fs::write(path, text)
    }
}

/// A planner change that was ignored rather than applied.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DroppedChange {
    pub area: String,
    pub to: String,
    pub reason: String,
}

/// A plan produced by one planner call, with whatever had to be dropped.
#[derive(Debug, Clone, PartialEq)]
pub struct PlanRevision {
    pub plan: UrbanPlan,
    pub dropped: Vec<DroppedChange>,
}

#[derive(Debug, Error)]
pub enum PlanningError {
    #[error("GatewayFailure: {0}")]
    Gateway(#[from] GatewayError),
    #[error("{0}")]
    Plan(#[from] PlanError),
    #[error("DiscussionAborted: {failed} of {total} utterances failed")]
    DiscussionAborted { failed: usize, total: usize },
    #[error("EmptySummary: the discussion summary came back blank")]
    EmptySummary,
    #[error("KnowledgeUnreadable: {0}")]
    KnowledgeUnreadable(String),
    #[error("KnowledgeEmpty: the planner knowledge text is empty")]
    KnowledgeEmpty,
}

#[derive(Debug, Deserialize)]
struct ChangeWire {
    area: String,
    to: String,
}

#[derive(Debug, Deserialize)]
struct ChangeSetWire {
    #[serde(default)]
    changes: Vec<ChangeWire>,
}

const CHANGE_SCHEMA: &str = r#"{"changes": [{"area": "<area id>", "to": "<land use>"}]}"#;

fn plan_listing(plan: &UrbanPlan) -> String {
    plan.assignment
        .iter()
        .map(|(id, u)| format!("{id}: {u}"))
        .collect::<Vec<_>>()
        .join("\n")
}

fn region_listing(region: &Region) -> String {
    region
        .areas
        .iter()
        .map(|a| {
            format!(
                "{}: centroid ({:.0}, {:.0}), {:.0} m2, initially {}{}",
                a.id,
                a.x,
                a.y,
                a.size_m2,
                a.land_use,
                if a.fixed { ", fixed" } else { "" }
            )
        })
        .collect::<Vec<_>>()
        .join("\n")
}

fn suggestions_listing(suggestions: &SuggestionList) -> String {
    if suggestions.items.is_empty() {
        "(none)".to_string()
    } else {
        suggestions
            .items
            .iter()
            .map(|s| format!("- {}", s.describe()))
            .collect::<Vec<_>>()
            .join("\n")
    }
}

/// Filter a parsed change set down to what the plan model will accept,
/// logging anything dropped: unknown areas, unknown land uses, attempts
/// to move a fixed area off its type.
fn screen_changes(
    region: &Region,
    wire: ChangeSetWire,
) -> (Vec<(String, LandUseType)>, Vec<DroppedChange>) {
    let mut kept = Vec::new();
    let mut dropped = Vec::new();
    for change in wire.changes {
        let Some(to) = LandUseType::parse_loose(&change.to) else {
            log::warn!("dropping change for {}: unknown land use `{}`", change.area, change.to);
            dropped.push(DroppedChange {
                area: change.area,
                to: change.to,
                reason: "unknown land use".to_string(),
            });
            continue;
        };
        let Some(area) = region.area(&change.area) else {
            log::warn!("dropping change for unknown area `{}`", change.area);
            dropped.push(DroppedChange {
                area: change.area,
                to: to.label().to_string(),
                reason: "unknown area".to_string(),
            });
            continue;
        };
        if area.fixed && to != area.land_use {
            log::warn!("dropping change for fixed area `{}`", change.area);
            dropped.push(DroppedChange {
                area: change.area,
                to: to.label().to_string(),
                reason: "fixed area".to_string(),
            });
            continue;
        }
        kept.push((change.area, to));
    }
    (kept, dropped)
}

/// Eq.-one step: one structured `plan.draft` call over the previous plan,
/// the knowledge text and the previous iteration's suggestions.
pub fn draft_plan(
    knowledge: &PlannerKnowledge,
    prev_plan: &UrbanPlan,
    suggestions: &SuggestionList,
    region: &Region,
    gateway: &Gateway,
) -> Result<PlanRevision, PlanningError> {
    let prompt = render(
        include_str!("../prompts/plan_draft.txt"),
        &[
            ("knowledge", knowledge.text.trim()),
            ("region", &region_listing(region)),
            ("iteration", &prev_plan.iteration.to_string()),
            ("plan", &plan_listing(prev_plan)),
            ("suggestions", &suggestions_listing(suggestions)),
        ],
    );
    let wire: ChangeSetWire =
        gateway.complete_structured(&ChatRequest::new("plan.draft", prompt), CHANGE_SCHEMA)?;
    let (kept, dropped) = screen_changes(region, wire);
    let plan = prev_plan.apply(region, &kept)?;
    Ok(PlanRevision { plan, dropped })
}

/// Round-robin resident discussion of the previous plan, then one
/// summarization call producing `D_k`.
///
/// `pools` carries the residents' memories starting from the second
/// iteration; pass `None` on the first, when nobody has lived yet.
pub fn discuss(
    population: &[ResidentProfile],
    prev_plan: &UrbanPlan,
    mut pools: Option<&mut [MemoryPool]>,
    memory: &MemoryParams,
    gateway: &Gateway,
    rounds: u32,
    now: u64,
) -> Result<DiscussionTranscript, PlanningError> {
    let plan_text = plan_listing(prev_plan);
    let mut transcript: Vec<Utterance> = Vec::new();
    let mut failed = 0usize;
    let total = rounds as usize * population.len();
    for _round in 0..rounds {
        for (i, profile) in population.iter().enumerate() {
            let memories_section = match pools.as_mut() {
                Some(pools) => {
                    let retrieved = pools[i].retrieve(&plan_text, 3, now, memory);
                    if retrieved.is_empty() {
                        String::new()
                    } else {
                        let lines = retrieved
                            .iter()
                            .map(|m| format!("- {}", m.text))
                            .collect::<Vec<_>>()
                            .join("\n");
                        format!("Your relevant memories:\n{lines}\n\n")
                    }
                }
                None => String::new(),
            };
            let so_far = if transcript.is_empty() {
                "(no discussion yet)".to_string()
            } else {
                transcript
                    .iter()
                    .map(|u| format!("{}: {}", u.resident, u.text))
                    .collect::<Vec<_>>()
                    .join("\n")
            };
            let prompt = render(
                include_str!("../prompts/plan_discuss.txt"),
                &[
                    ("profile", &profile.prompt_block()),
                    ("iteration", &prev_plan.iteration.to_string()),
                    ("plan", &plan_text),
                    ("transcript", &so_far),
                    ("memories_section", &memories_section),
                ],
            );
            match gateway.complete(&ChatRequest::new("plan.discuss", prompt)) {
                Ok(completion) => transcript.push(Utterance {
                    resident: profile.id.clone(),
                    text: completion.text.trim().to_string(),
                }),
                Err(err) => {
                    failed += 1;
                    log::warn!("skipping speaker {}: {err}", profile.id);
                    if failed * 2 > total {
                        return Err(PlanningError::DiscussionAborted { failed, total });
                    }
                }
            }
        }
    }

    let transcript_text = transcript
        .iter()
        .map(|u| format!("{}: {}", u.resident, u.text))
        .collect::<Vec<_>>()
        .join("\n");
    let prompt = render(
        include_str!("../prompts/plan_summarize.txt"),
        &[("transcript", &transcript_text)],
    );
    let summary = gateway
        .complete(&ChatRequest::new("plan.summarize", prompt))?
        .text
        .trim()
        .to_string();
    if summary.is_empty() && !transcript.is_empty() {
        return Err(PlanningError::EmptySummary);
    }
    Ok(DiscussionTranscript {
        rounds: transcript,
        summary,
    })
}

/// Eq.-three step: polish the draft with the discussion summary. The
/// result carries iteration number `k`.
pub fn finalize_plan(
    knowledge: &PlannerKnowledge,
    draft: &UrbanPlan,
    suggestions: &SuggestionList,
    discussion_summary: &str,
    k: u32,
    region: &Region,
    gateway: &Gateway,
) -> Result<PlanRevision, PlanningError> {
    let prompt = render(
        include_str!("../prompts/plan_final.txt"),
        &[
            ("knowledge", knowledge.text.trim()),
            ("region", &region_listing(region)),
            ("iteration", &draft.iteration.to_string()),
            ("plan", &plan_listing(draft)),
            ("suggestions", &suggestions_listing(suggestions)),
            ("discussion", discussion_summary),
        ],
    );
    let wire: ChangeSetWire =
        gateway.complete_structured(&ChatRequest::new("plan.final", prompt), CHANGE_SCHEMA)?;
    let (kept, dropped) = screen_changes(region, wire);
    let plan = draft.apply(region, &kept)?.with_iteration(k);
    Ok(PlanRevision { plan, dropped })
}

/// Baseline: every non-fixed area drawn uniformly from the eight
/// plannable types, deterministic under the RNG.
pub fn random_baseline_plan<R: Rng>(region: &Region, rng: &mut R) -> UrbanPlan {
    let assignment = region
        .areas
        .iter()
        .map(|a| {
            let u = if a.fixed {
                a.land_use
            } else {
                LandUseType::PLANNABLE[rng.gen_range(0..LandUseType::PLANNABLE.len())]
            };
            (a.id.clone(), u)
        })
        .collect();
    UrbanPlan {
        iteration: 0,
        assignment,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::gateway::Script;
    use crate::judging::{Proposed, Suggestion, Target};
    use crate::memory::{MemoryEntry, MemoryKind};
    use crate::util::phase_rng;

    fn knowledge() -> PlannerKnowledge {
        PlannerKnowledge::new(fixtures::knowledge_text()).unwrap()
    }

    fn no_suggestions() -> SuggestionList {
        SuggestionList::default()
    }

    #[test]
    fn draft_assigning_every_vacant_area_leaves_none_vacant() {
        let region = fixtures::region_12();
        let p0 = UrbanPlan::init(&region);
        let response = r#"{"changes":[
            {"area":"a_6","to":"commercial"},{"area":"a_7","to":"school"},
            {"area":"a_8","to":"hospital"},{"area":"a_9","to":"recreation"},
            {"area":"a_10","to":"office"},{"area":"a_11","to":"park"},
            {"area":"a_12","to":"commercial"}]}"#;
        let gateway = Gateway::scripted(Script::new().entry("plan.draft", [response]));
        let revision =
            draft_plan(&knowledge(), &p0, &no_suggestions(), &region, &gateway).unwrap();
        assert!(revision.dropped.is_empty());
        assert!(!revision
            .plan
            .assignment
            .values()
            .any(|u| *u == LandUseType::Vacant));
        revision.plan.validate_against(&region).unwrap();
    }

    #[test]
    fn draft_drops_fixed_area_changes_but_survives() {
        let region = fixtures::region_12();
        let p0 = UrbanPlan::init(&region);
        let response =
            r#"{"changes":[{"area":"a_1","to":"commercial"},{"area":"a_12","to":"park"}]}"#;
        let gateway = Gateway::scripted(Script::new().entry("plan.draft", [response]));
        let revision =
            draft_plan(&knowledge(), &p0, &no_suggestions(), &region, &gateway).unwrap();
        assert_eq!(revision.dropped.len(), 1);
        assert_eq!(revision.dropped[0].area, "a_1");
        assert_eq!(revision.plan.land_use("a_1"), Some(LandUseType::Residential));
        assert_eq!(revision.plan.land_use("a_12"), Some(LandUseType::Park));
        revision.plan.validate_against(&region).unwrap();
    }

    #[test]
    fn draft_prompt_serializes_the_suggestions() {
        let region = fixtures::region_12();
        let p0 = UrbanPlan::init(&region).with_iteration(1);
        let suggestions = SuggestionList {
            items: vec![Suggestion {
                target: Target::Area("a_12".to_string()),
                proposed: Proposed::LandUse(LandUseType::OpenSpace),
                rationale: "residents want green space near homes".to_string(),
            }],
        };
        let gateway = Gateway::scripted(Script::new().entry(
            "plan.draft",
            [r#"{"changes":[{"area":"a_12","to":"open_space"}]}"#],
        ));
        let revision = draft_plan(&knowledge(), &p0, &suggestions, &region, &gateway).unwrap();
        assert_eq!(revision.plan.land_use("a_12"), Some(LandUseType::OpenSpace));
        let prompt = &gateway.audit_entries()[0].prompt;
        assert!(prompt.contains("a_12"));
        assert!(prompt.contains("residents want green space near homes"));
    }

    #[test]
    fn discussion_is_round_robin_in_population_order() {
        let population = fixtures::stub_population(3);
        let region = fixtures::region_12();
        let p0 = UrbanPlan::init(&region);
        let gateway = Gateway::scripted(
            Script::new()
                .cycled("plan.discuss", ["I would like more services nearby."])
                .entry("plan.summarize", ["Everyone wants services."]),
        );
        let transcript = discuss(
            &population,
            &p0,
            None,
            &MemoryParams::default(),
            &gateway,
            2,
            0,
        )
        .unwrap();
        let speakers: Vec<&str> = transcript.rounds.iter().map(|u| u.resident.as_str()).collect();
        assert_eq!(speakers, ["R_1", "R_2", "R_3", "R_1", "R_2", "R_3"]);
        assert_eq!(transcript.summary, "Everyone wants services.");
    }

    #[test]
    fn first_iteration_discussion_has_no_memory_section() {
        let population = fixtures::stub_population(2);
        let region = fixtures::region_12();
        let p0 = UrbanPlan::init(&region);
        let gateway = Gateway::scripted(
            Script::new()
                .cycled("plan.discuss", ["Fine by me."])
                .entry("plan.summarize", ["No objections."]),
        );
        discuss(
            &population,
            &p0,
            None,
            &MemoryParams::default(),
            &gateway,
            1,
            0,
        )
        .unwrap();
        for entry in gateway.audit_entries() {
            if entry.tag == "plan.discuss" {
                assert!(!entry.prompt.contains("Your relevant memories"));
            }
        }
    }

    #[test]
    fn later_iterations_inject_retrieved_memories() {
        let population = fixtures::stub_population(1);
        let region = fixtures::region_12();
        let p0 = UrbanPlan::init(&region).with_iteration(1);
        let mut pools = vec![MemoryPool::new()];
        pools[0]
            .add(MemoryEntry::new(
                MemoryKind::Thought,
                "the long walk to any shop wears me out",
                100,
                8,
            ))
            .unwrap();
        let gateway = Gateway::scripted(
            Script::new()
                .cycled("plan.discuss", ["We need shops closer."])
                .entry("plan.summarize", ["Shops should be closer."]),
        );
        discuss(
            &population,
            &p0,
            Some(&mut pools),
            &MemoryParams::default(),
            &gateway,
            1,
            1440,
        )
        .unwrap();
        let discuss_prompt = &gateway
            .audit_entries()
            .iter()
            .find(|e| e.tag == "plan.discuss")
            .unwrap()
            .prompt
            .clone();
        assert!(discuss_prompt.contains("Your relevant memories"));
        assert!(discuss_prompt.contains("wears me out"));
    }

    #[test]
    fn insistent_speaker_shows_up_in_transcript_and_summary() {
        let mut population = fixtures::stub_population(3);
        population[2].id = "R_19".to_string();
        let region = fixtures::region_12();
        let p0 = UrbanPlan::init(&region);
        let gateway = Gateway::scripted(
            Script::new()
                .cycled_matched(
                    "plan.discuss",
                    ["You are R_19,"],
                    ["I insist on an open space close to home."],
                )
                .cycled("plan.discuss", ["The plan seems fine."])
                .entry(
                    "plan.summarize",
                    ["R_19 keeps pressing for an open space close to home."],
                ),
        );
        let transcript = discuss(
            &population,
            &p0,
            None,
            &MemoryParams::default(),
            &gateway,
            2,
            0,
        )
        .unwrap();
        let gardener_lines: Vec<&Utterance> = transcript
            .rounds
            .iter()
            .filter(|u| u.resident == "R_19")
            .collect();
        assert_eq!(gardener_lines.len(), 2);
        assert!(gardener_lines
            .iter()
            .all(|u| u.text.contains("open space")));
        assert!(transcript.summary.contains("open space"));
    }

    #[test]
    fn failing_speakers_are_skipped_until_the_majority_fails() {
        let population = fixtures::stub_population(3);
        let region = fixtures::region_12();
        let p0 = UrbanPlan::init(&region);
        // Only one queued utterance: the other two speakers fail, which
        // crosses the 50% abort threshold.
        let gateway = Gateway::scripted(Script::new().entry("plan.discuss", ["Only me."]));
        let err = discuss(
            &population,
            &p0,
            None,
            &MemoryParams::default(),
            &gateway,
            1,
            0,
        )
        .unwrap_err();
        assert!(matches!(
            err,
            PlanningError::DiscussionAborted { failed: 2, total: 3 }
        ));
    }

    #[test]
    fn finalize_with_empty_change_set_returns_the_draft() {
        let region = fixtures::region_12();
        let draft = UrbanPlan::init(&region);
        let gateway = Gateway::scripted(Script::new().entry("plan.final", [r#"{"changes":[]}"#]));
        let revision = finalize_plan(
            &knowledge(),
            &draft,
            &no_suggestions(),
            "nothing to add",
            1,
            &region,
            &gateway,
        )
        .unwrap();
        assert_eq!(revision.plan.iteration, 1);
        assert_eq!(revision.plan.assignment, draft.assignment);
    }

    #[test]
    fn finalize_change_shows_up_in_the_diff() {
        let region = fixtures::region_12();
        let draft = UrbanPlan::init(&region);
        let gateway = Gateway::scripted(Script::new().entry(
            "plan.final",
            [r#"{"changes":[{"area":"a_12","to":"open_space"}]}"#],
        ));
        let revision = finalize_plan(
            &knowledge(),
            &draft,
            &no_suggestions(),
            "open space, please",
            1,
            &region,
            &gateway,
        )
        .unwrap();
        let diff = draft.diff(&revision.plan).unwrap();
        assert_eq!(diff.changes.len(), 1);
        assert_eq!(diff.changes[0].area, "a_12");
        // The finalize prompt embeds the discussion summary.
        let prompt = &gateway.audit_entries()[0].prompt;
        assert!(prompt.contains("open space, please"));
    }

    #[test]
    fn unparseable_then_repaired_response_still_lands() {
        let region = fixtures::region_12();
        let draft = UrbanPlan::init(&region);
        let gateway = Gateway::scripted(Script::new().entry(
            "plan.final",
            ["mumble mumble", r#"{"changes":[{"area":"a_11","to":"park"}]}"#],
        ));
        let revision = finalize_plan(
            &knowledge(),
            &draft,
            &no_suggestions(),
            "summary",
            1,
            &region,
            &gateway,
        )
        .unwrap();
        assert_eq!(revision.plan.land_use("a_11"), Some(LandUseType::Park));
        assert_eq!(gateway.call_count(), 2);
    }

    #[test]
    fn baseline_is_seed_deterministic_and_never_residential_or_vacant() {
        let region = fixtures::region_12();
        let a = random_baseline_plan(&region, &mut phase_rng(7, 0, "baseline"));
        let b = random_baseline_plan(&region, &mut phase_rng(7, 0, "baseline"));
        assert_eq!(a, b);
        for area in region.areas.iter().filter(|a| !a.fixed) {
            let u = a.land_use(&area.id).unwrap();
            assert_ne!(u, LandUseType::Residential);
            assert_ne!(u, LandUseType::Vacant);
        }
        a.validate_against(&region).unwrap();
    }

    #[test]
    fn baseline_draw_is_roughly_uniform() {
        let mut region = fixtures::region_12();
        for area in &mut region.areas {
            area.land_use = LandUseType::Vacant;
            area.fixed = false;
        }
        let mut rng = phase_rng(11, 0, "baseline");
        let mut counts = std::collections::BTreeMap::new();
        let draws = 10_000 / region.areas.len() * region.areas.len();
        for _ in 0..(draws / region.areas.len()) {
            let plan = random_baseline_plan(&region, &mut rng);
            for u in plan.assignment.values() {
                *counts.entry(*u).or_insert(0usize) += 1;
            }
        }
        let expected = 1.0 / LandUseType::PLANNABLE.len() as f64;
        for u in LandUseType::PLANNABLE {
            let freq = *counts.get(&u).unwrap_or(&0) as f64 / draws as f64;
            assert!(
                (freq - expected).abs() < 0.02,
                "{u} drawn with frequency {freq}"
            );
        }
    }
}
