//! Operator tooling: scripted dyad sessions and the offline commands behind
//! the `dyad` binary.

pub mod commands;
pub mod runner;
pub mod script;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    /// Bad arguments or unreadable input. Exit code 2.
    #[error("{0}")]
    Usage(String),
    /// A check, lint or assertion did not hold. Exit code 1.
    #[error("{0}")]
    Failure(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Failure(_) => 1,
        }
    }
}

impl From<script::ParseError> for CliError {
    fn from(e: script::ParseError) -> Self {
        CliError::Usage(e.to_string())
    }
}
