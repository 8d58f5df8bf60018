//! Closed-loop land-use planning simulation.
//!
//! The engine iterates three phases over a partitioned urban region:
//! planning (a planner agent drafts and polishes a land-use plan with
//! resident input), living (residents move through the region and post
//! on a simulated social feed, one tick per minute), and judging
//! (quantitative coverage metrics plus questionnaire interviews produce
//! a score and improvement suggestions that feed the next cycle).
//!
//! All agent cognition goes through [`gateway::Gateway`], which runs
//! either against a live chat-completion endpoint or a deterministic
//! scripted backend, so full runs replay byte-for-byte from a seed and
//! a script file.

pub mod fixtures;
pub mod gateway;
pub mod judging;
pub mod living;
pub mod memory;
pub mod orchestrator;
pub mod plan;
pub mod planning;
pub mod profile;
pub mod report;
pub mod util;

pub use gateway::Gateway;
pub use orchestrator::{resume, run_cycle, CycleConfig, IterationRecord};
pub use plan::{LandUseType, Region, UrbanPlan};
pub use profile::ResidentProfile;
