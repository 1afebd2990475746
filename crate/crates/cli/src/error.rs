//! CLI error type with process exit codes.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    /// Configuration file problems: exit code 2.
    #[error("config error: {0}")]
    Config(String),

    /// Numerical or calibration failures during a run: exit code 3.
    #[error("run failed: {0}")]
    Numeric(String),

    /// Filesystem problems: exit code 1.
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Numeric(_) => 3,
            CliError::Io(_) => 1,
        }
    }
}

impl From<drtz_core::Error> for CliError {
    fn from(err: drtz_core::Error) -> Self {
        CliError::Numeric(err.to_string())
    }
}
