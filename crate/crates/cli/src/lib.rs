//! Command-line front end for the `lvjump` library.

mod args;
mod commands;
mod output;

pub use args::{AnalyzeKind, Cli, Command, Common};
pub use commands::run;

/// Process exit codes.
pub mod exit {
    pub const OK: u8 = 0;
    pub const VIOLATION: u8 = 1;
    pub const BAD_INPUT: u8 = 2;
    pub const DIVERGED: u8 = 3;
    pub const ORACLE_MISMATCH: u8 = 4;
    pub const PREREQUISITE: u8 = 5;
}

/// A run that ended with a non-zero exit code.
#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub message: String,
}

impl Failure {
    pub fn new(code: u8, message: impl Into<String>) -> Self {
        Failure {
            code,
            message: message.into(),
        }
    }

    pub fn bad_input(message: impl Into<String>) -> Self {
        Failure::new(exit::BAD_INPUT, message)
    }
}

impl std::fmt::Display for Failure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.message)
    }
}

impl std::error::Error for Failure {}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::bad_input(format!("i/o: {e}"))
    }
}
