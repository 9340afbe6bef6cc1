//! Experiment harness: scenarios, training runs, statistics and comparisons.

pub mod compare;
pub mod config;
pub mod oracle;
pub mod run;
pub mod scenario;
pub mod stats;

pub use compare::{compare_runs, ComparisonReport};
pub use config::RunConfig;
pub use oracle::{brute_force_static_oracle, OracleResult};
pub use run::{run_experiment, PreparedRun, RunOutput, RunSummary, StepLogRow};
pub use scenario::{ScenarioConfig, ScenarioKind};
