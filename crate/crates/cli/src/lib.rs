//! Scenario-file front end for the `ess-reform` solver: loading and writing
//! scenarios, running the solver, certifier and oracle, and exporting results
//! as JSON and CSV.

pub mod commands;
pub mod report;
pub mod scenario;
pub mod sets;

pub use commands::{exit, run_certify, run_oracle_check, run_sample_sets, run_solve, CliError, RunConfig};
pub use scenario::{load_scenario, parse_scenario, write_scenario, Output, Scenario, ScenarioError, SolveOverrides};
