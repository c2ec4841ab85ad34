//! Scenario orchestration for the `sim` command-line tool.

pub mod config;
pub mod output;
pub mod scenarios;

use thiserror::Error;

pub use config::Config;
pub use output::Outputs;
pub use scenarios::{figure_runs, run_scenario, RunOptions, Scenario};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error(transparent)]
    Model(#[from] rydberg_mirror::Error),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    /// Process exit code: 2 for configuration and validation errors, 3 for
    /// numeric failures, 1 for I/O.
    pub fn exit_code(&self) -> i32 {
        use rydberg_mirror::Error as E;
        match self {
            CliError::Config(_) => 2,
            CliError::Model(E::Numeric(_) | E::Singular(_) | E::NonUniqueSteadyState { .. }) => 3,
            CliError::Model(_) => 2,
            CliError::Io(_) => 1,
        }
    }
}
