//! Command-line front end: configuration, runs and output files.

pub mod config;
pub mod output;
pub mod run;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("usage error: {0}")]
    Usage(String),

    #[error("solver failure: {0}")]
    Solver(#[from] chsaddle::Error),

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Solver(_) | CliError::Io(_) => 1,
        }
    }
}
