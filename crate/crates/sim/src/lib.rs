//! Deterministic multi-agent simulation on top of `stp-core`.
//!
//! A [`Scenario`] fixes a vocabulary, a ground-truth world narrative and a
//! set of agents with plans, goals, observation windows and optional blind
//! intervals. [`simulate`] advances the world tick by tick; agents remember
//! what they see, explain surprises by abduction, merge knowledge when they
//! meet, and an optional consensus task runs sheaf diffusion at the end.

pub mod engine;
pub mod scenario;
pub mod trace;

pub use engine::{goal_satisfied, run, simulate, Outcome, RunOptions, SimError};
pub use scenario::{validate_scenario, Diagnostic, Scenario, ScenarioError};
pub use trace::{Trace, TraceEvent, TraceRecord};
