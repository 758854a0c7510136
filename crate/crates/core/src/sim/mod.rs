//! Deterministic closed-loop simulation, scenario files and trace audits.

pub mod audit;
pub mod harness;
pub mod scenario;
pub mod trace;

pub use harness::{environment_problem, prepare, run_prepared, run_scenario, RunOutput, RunSummary};
pub use scenario::Scenario;
