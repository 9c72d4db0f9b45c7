//! Config-driven experiment runner with deterministic artifacts.

mod artifacts;
mod config;
mod report;
mod runner;
mod suites;

pub use artifacts::{emit_plot_data, load_matrix_csv, plot_trajectories_csv, write_trajectories_csv};
pub use config::{ExperimentConfig, ExperimentKind};
pub use report::{CheckResult, RunReport};
pub use runner::run_experiment;
pub use suites::{log_log_slope, verify_suite, SUITE_NAMES};
