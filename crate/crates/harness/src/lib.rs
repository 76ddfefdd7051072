//! Experiment harness for the `hifba` solvers: configuration, runners, traces and plots.

pub mod config;
pub mod error;
pub mod inverse;
pub mod nmf;
pub mod output;
pub mod plot;
pub mod stats;
pub mod validate;

pub use config::{Experiment, ExperimentConfig, SolverName};
pub use error::{HarnessError, Result};
