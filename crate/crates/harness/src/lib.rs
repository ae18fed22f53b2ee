//! Experiment runner for `rsmd-core`: configs, Monte Carlo coverage studies,
//! method comparison, closed-form bounds and CSV/JSON output.

pub mod bounds;
pub mod config;
pub mod experiment;
pub mod output;
pub mod stats;

pub use config::ExperimentConfig;
pub use experiment::{Experiment, MonteCarlo};
pub use output::SCHEMA_VERSION;
