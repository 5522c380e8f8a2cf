//! Library side of the `explain-lab` binary: configuration parsing and
//! one function per subcommand.

pub mod commands;
pub mod config;

use thiserror::Error;

pub use config::{Command, RunConfig};

#[derive(Debug, Error)]
pub enum CliError {
    /// Bad configuration, flags or input paths.
    #[error("{0}")]
    Validation(String),
    #[error(transparent)]
    Runtime(#[from] explain_lab::Error),
    /// The run finished but some units failed.
    #[error("{0}")]
    Failures(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Validation(_) => 1,
            CliError::Runtime(_) | CliError::Failures(_) => 2,
        }
    }
}
