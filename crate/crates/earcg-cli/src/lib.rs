//! Experiment harness around the `earcg` solver library: configuration
//! parsing, shared initialization, per-solver trace capture, CSV
//! serialization, and comparison summaries.

pub mod config;
pub mod runner;
pub mod summary;

use thiserror::Error;

/// Harness-level failures, each mapped to a process exit code. Solver
/// non-convergence is *not* an error — it is recorded in the summary and
/// the process still exits 0.
#[derive(Debug, Error)]
pub enum HarnessError {
    /// Unparseable or invalid configuration (exit 1).
    #[error("config error: {0}")]
    Config(String),
    /// Filesystem failure reading configs or writing outputs (exit 2).
    #[error("i/o error: {0}")]
    Io(String),
    /// Fault inside the solver stack or the harness itself (exit 3).
    #[error("internal fault: {0}")]
    Internal(String),
}

impl HarnessError {
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Config(_) => 1,
            HarnessError::Io(_) => 2,
            HarnessError::Internal(_) => 3,
        }
    }
}
