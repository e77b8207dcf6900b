//! Library side of the `lobfactor` binary: resolved configuration, run
//! manifests and the three subcommands.

pub mod commands;
pub mod config;
pub mod manifest;

use lobfactor_core::error::{ConfigError, DataError, Error};
use thiserror::Error as ThisError;

pub use commands::{
    cmd_experiment, cmd_metrics, cmd_simulate, ExperimentArgs, ExperimentOutputs, MetricsArgs,
    MetricsReport, SimulateOutputs,
};
pub use config::{ExperimentSettings, RunConfig};
pub use manifest::RunManifest;

pub const EXIT_OK: i32 = 0;
pub const EXIT_RUNTIME: i32 = 1;
// 2 is left to clap's usage errors.
pub const EXIT_CONFIG: i32 = 3;
pub const EXIT_DATA: i32 = 4;
pub const EXIT_DEGENERATE: i32 = 5;

/// Failure classes with their process exit codes.
#[derive(Debug, ThisError)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("degenerate result: {0}")]
    Degenerate(String),
    #[error("runtime error: {0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => EXIT_CONFIG,
            CliError::Data(_) => EXIT_DATA,
            CliError::Degenerate(_) => EXIT_DEGENERATE,
            CliError::Runtime(_) => EXIT_RUNTIME,
        }
    }

    pub(crate) fn output(path: &std::path::Path, e: impl std::fmt::Display) -> Self {
        CliError::Runtime(format!("writing {}: {e}", path.display()))
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::Config(e.to_string())
    }
}

impl From<DataError> for CliError {
    fn from(e: DataError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        match e {
            Error::Config(e) => e.into(),
            Error::Data(e) => e.into(),
            Error::Timegrid(e) => CliError::Data(e.to_string()),
            e @ (Error::Metrics(_)
            | Error::AllTrialsDegenerate(_)
            | Error::NoStableCombination(_)) => CliError::Degenerate(e.to_string()),
            Error::Book(e) => CliError::Runtime(e.to_string()),
        }
    }
}

impl From<lobfactor_core::error::MetricsError> for CliError {
    fn from(e: lobfactor_core::error::MetricsError) -> Self {
        CliError::Degenerate(e.to_string())
    }
}
