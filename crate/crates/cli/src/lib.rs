//! Experiment harness for opdlab: config parsing, arm orchestration, metrics,
//! summaries and plots.

pub mod checks;
pub mod config;
pub mod error;
pub mod experiment;
pub mod metrics;
pub mod plots;
pub mod summary;

pub use config::{Experiment, RunConfig};
pub use error::{HarnessError, Result};
pub use experiment::{run_experiment, RunOptions, RunReport};
