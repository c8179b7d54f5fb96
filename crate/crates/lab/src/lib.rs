//! Experiment harness for `mclab-core`: configuration, Monte-Carlo drivers,
//! text file formats and CSV/SVG reports.

pub mod config;
pub mod error;
pub mod experiments;
pub mod formats;
pub mod report;
pub mod stats;

pub use config::{ExperimentConfig, Kind};
pub use error::{LabError, Result};
pub use report::ExperimentRow;
