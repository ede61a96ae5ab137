//! Configuration-driven experiment runner for the contact solvers.

pub mod cache;
pub mod config;
pub mod error;
pub mod run;
pub mod tables;

pub use config::ExperimentConfig;
pub use error::CliError;
pub use run::{run_experiment, PointSummary, RunResult};
