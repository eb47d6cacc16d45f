//! Scenario loading and the `run` / `compare` commands behind the `qrs`
//! binary.

pub mod commands;
pub mod scenario;

pub use commands::{cmd_compare, cmd_run, load_scenario, load_trace, CliError, CompareArgs, RunArgs};
pub use scenario::{parse_scenario, ScenarioError};
