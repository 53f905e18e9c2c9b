//! Batch runner for the polymorph toolkit.
//!
//! A run takes an [`ExperimentConfig`], executes one suite against the
//! bundled kernel corpus or the symbolic model, and emits a
//! [`ReportDocument`] plus CSV series. Exit codes: 0 when every check holds,
//! 1 when a check is violated, 2 for invalid or infeasible input, 3 for I/O
//! failures.

pub mod config;
pub mod corpus;
pub mod report;
pub mod runner;

pub use config::{Command, ExperimentConfig, Mode};
pub use report::{ReportDocument, Status};
pub use runner::{full_suite, run, write_outputs, RunOptions};

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error("invalid config:\n  {}", .0.join("\n  "))]
    Invalid(Vec<String>),
    #[error(transparent)]
    Core(#[from] polymorph::Error),
    #[error("{0}: {1}")]
    Io(String, std::io::Error),
}

impl RunError {
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Invalid(_) | RunError::Core(_) => 2,
            RunError::Io(..) => 3,
        }
    }
}
