//! Front end for the `covmech` binary: configuration, commands and reports.

use std::fmt;

pub mod commands;
pub mod config;

pub use commands::{bracket_table, simulate, verify, Command, Outcome};
pub use config::{Overrides, RunConfig};

/// Process exit status.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Pass = 0,
    CheckFailed = 1,
    ConfigError = 2,
    NumericalFailure = 3,
}

impl Status {
    pub fn code(self) -> i32 {
        self as i32
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum CliError {
    Config(String),
    Numerical(String),
}

impl CliError {
    pub fn status(&self) -> Status {
        match self {
            CliError::Config(_) => Status::ConfigError,
            CliError::Numerical(_) => Status::NumericalFailure,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "configuration error: {m}"),
            CliError::Numerical(m) => write!(f, "numerical failure: {m}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<covmech::Error> for CliError {
    fn from(e: covmech::Error) -> Self {
        use covmech::Error as E;
        match e {
            E::SingularMetric { .. } | E::MaxStepsExceeded { .. } | E::NonFiniteState { .. } => {
                CliError::Numerical(e.to_string())
            }
            _ => CliError::Config(e.to_string()),
        }
    }
}
