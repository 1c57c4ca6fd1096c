//! Experiment harness: generator -> engine variants -> metrics files.

pub mod commands;
pub mod error;
pub mod experiment;
pub mod output;
pub mod runner;

pub use error::{HarnessError, Result};
pub use experiment::{DataSpec, ExperimentConfig, InitSpec};
pub use runner::{run_compare, run_variant, MetricsRow, RunOutput};
