//! Load generation and metrics over the agents' REST admin APIs.

pub mod load;
pub mod net;
pub mod process;
pub mod report;

use thiserror::Error;

pub use load::{run, BenchRun, LoadProfile, MetricsReport, Mode, Sample, Scenario};
pub use net::{LocalNet, Targets};
pub use process::{run_process_suite, Phase, ProcessTimes};
pub use report::{export, read_reports, read_samples, CSV_HEADER};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BenchError {
    #[error("unknown scenario {0:?}; valid: {valid}", valid = Scenario::valid_names())]
    UnknownScenario(String),
    #[error("invalid load profile: {0}")]
    InvalidProfile(String),
    #[error("target down: {0}")]
    TargetDown(String),
    #[error("setup failed: {0}")]
    Setup(String),
    #[error("phase {phase} failed: {detail}")]
    Phase { phase: Phase, detail: String },
    #[error("io: {0}")]
    Io(String),
}
