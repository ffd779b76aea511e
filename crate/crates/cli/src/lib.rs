//! Config-driven command-line harness for the SIR and ASIR engines.

pub mod config;
pub mod error;
pub mod run;

pub use config::{parse_config, ExperimentConfig, Mode};
pub use error::CliError;
pub use run::{execute, run_file, Outcome, RunOptions};
