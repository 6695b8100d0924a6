//! CLI error type carrying the exit-code class.
//!
//! Exit contract: 0 success, 1 runtime or numeric failure, 2 usage or
//! validation failure (clap's own parse errors also exit 2).

use std::fmt;

#[derive(Debug)]
pub enum CliError {
    /// Bad flags, malformed or inconsistent input files, invalid config.
    Usage(String),
    /// I/O failures while writing outputs, solver or evaluation failures.
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Runtime(_) => 1,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(msg) | CliError::Runtime(msg) => write!(f, "{msg}"),
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;

pub fn usage(msg: impl fmt::Display) -> CliError {
    CliError::Usage(msg.to_string())
}

pub fn runtime(msg: impl fmt::Display) -> CliError {
    CliError::Runtime(msg.to_string())
}
