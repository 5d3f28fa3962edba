//! Batch driver: JSON configuration, experiment dispatch, reports, CSV tables
//! and field snapshots.

pub mod config;
pub mod error;
pub mod run;

pub use config::{parse_config, parse_config_str, ExperimentConfig};
pub use error::CliError;
pub use run::{run, run_configured, Command, RunOptions};
