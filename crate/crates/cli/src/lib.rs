//! Library half of the `sqzkey` command: configuration, CSV output and the four modes.

pub mod commands;
pub mod config;
pub mod csv;

use std::fmt;

/// Exit status 1: the configuration or the file system is at fault.
pub const EXIT_CONFIG: i32 = 1;
/// Exit status 2: the computation failed, or `--strict` found no key or a clipped estimate.
pub const EXIT_NUMERIC: i32 = 2;

#[derive(Debug)]
pub enum CliError {
    Config(String),
    Io(String),
    Numeric(sqzkey::Error),
    Strict(String),
}

impl CliError {
    pub fn config(msg: impl Into<String>) -> Self {
        CliError::Config(msg.into())
    }

    pub fn io(path: &std::path::Path, e: std::io::Error) -> Self {
        CliError::Io(format!("{}: {e}", path.display()))
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Io(_) => EXIT_CONFIG,
            CliError::Numeric(sqzkey::Error::InvalidArgument(_)) => EXIT_CONFIG,
            CliError::Numeric(_) | CliError::Strict(_) => EXIT_NUMERIC,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "config: {m}"),
            CliError::Io(m) => write!(f, "io: {m}"),
            CliError::Numeric(e) => write!(f, "{e}"),
            CliError::Strict(m) => write!(f, "strict: {m}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<sqzkey::Error> for CliError {
    fn from(e: sqzkey::Error) -> Self {
        CliError::Numeric(e)
    }
}
