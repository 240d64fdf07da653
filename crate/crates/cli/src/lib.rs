//! Experiment driver for distillation with learnable augmentors: config
//! parsing, per-seed runs, result summaries, comparison tables and PNG grids.

pub mod compare;
pub mod config;
pub mod error;
pub mod render;
pub mod run;
pub mod summary;

pub use config::ExperimentConfig;
pub use error::{CliError, CliResult};
pub use run::{run_experiment, RunOptions, RunOutcome};
pub use summary::ResultSummary;
