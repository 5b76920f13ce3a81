//! Configuration, stages and report for the `fdp` command-line pipeline:
//! calibrate probes, acquire unknown states, fit, propagate uncertainties,
//! and summarize.

pub mod config;
pub mod error;
pub mod report;
pub mod selector;
pub mod stages;

pub use config::ExperimentConfig;
pub use error::{CliError, CliResult};
pub use selector::StateSelector;
