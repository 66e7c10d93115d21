//! Scenario harness: config parsing, verification experiments and reports.

pub mod config;
pub mod experiments;
pub mod jobs;
pub mod report;
pub mod scenario;

pub use config::{ConfigText, Kind};
pub use experiments::{limits, Artifact, Outcome};
pub use report::{Check, Report};
pub use scenario::{evaluate, run_scenario, run_scenario_to, scenario_header, write_outputs, ScenarioRun};
