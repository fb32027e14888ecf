//! Scenario orchestration: ledger bootstrap, agent services, the
//! end-to-end workflow and the load harness.

pub mod commands;
pub mod config;
pub mod demo;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CliError {
    /// Bad usage, configuration or environment. Exit code 2.
    #[error("{0}")]
    Config(String),
    /// A protocol step failed. Exit code 3.
    #[error("step {step} failed: {detail}")]
    Step { step: String, detail: String },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Step { .. } => 3,
        }
    }

    pub fn step(step: &str, detail: impl std::fmt::Display) -> Self {
        CliError::Step {
            step: step.to_owned(),
            detail: detail.to_string(),
        }
    }
}
