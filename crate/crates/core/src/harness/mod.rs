//! Experiment configuration, persistence and the experiment suites.

pub mod config;
pub mod experiments;
pub mod io;
pub mod stats;

pub use config::{ExcessOptions, ExperimentConfig, ExperimentKind, LambdaPolicy, RatesOptions};
pub use experiments::{run, ExperimentResult, ResultRow};
