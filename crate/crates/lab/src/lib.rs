//! Config-driven experiment runner for the depthsep library.

pub mod config;
pub mod experiments;
pub mod report;
pub mod sweep;

pub use config::{ConfigError, ExperimentConfig, ExperimentId};
pub use experiments::run;
pub use report::{ExperimentReport, RunOutput};
