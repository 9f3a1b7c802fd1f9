//! Batch front end: configuration files in, CSV tables out.

pub mod config;
pub mod run;

/// Failure classes, each with its own exit code.
#[derive(Debug, thiserror::Error, Clone, PartialEq)]
pub enum CliError {
    #[error("infeasible: {0}")]
    Infeasible(String),
    #[error("input error: {0}")]
    Input(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Infeasible(_) => 2,
            Self::Input(_) => 3,
            Self::Numerical(_) => 4,
        }
    }
}

/// Environment variable holding the default worker count.
pub const THREADS_ENV: &str = "DEPBOUNDS_THREADS";
