//! Scenario runner for the nhrf toolkit.

pub mod plot;
pub mod presets;
pub mod run;
pub mod scenario;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CliError {
    /// Bad input: schema, expressions, shapes, tolerances.
    #[error("invalid scenario: {0}")]
    Validation(String),
    /// A computation failed its own checks.
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("i/o: {0}")]
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) => 1,
            CliError::Numerical(_) => 2,
            CliError::Io(_) => 1,
        }
    }
}

pub use run::{run, RunReport, Stage};
pub use scenario::{load_scenario, parse_scenario, Overrides, Scenario};
