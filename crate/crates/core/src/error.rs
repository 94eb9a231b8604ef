use std::path::PathBuf;

use num_complex::Complex64;
use thiserror::Error;

/// Errors produced anywhere in the laboratory.
#[derive(Debug, Error)]
pub enum LabError {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("parameter constraint violated: {}", failed.join("; "))]
    Constraint { failed: Vec<String> },

    #[error("shape error: expected {expected}, got {rows}x{cols}")]
    Shape {
        expected: String,
        rows: usize,
        cols: usize,
    },

    #[error("numerical failure: {what} (residual {residual:e})")]
    Numerical { what: String, residual: f64 },

    #[error("no convergence after {iterations} iterations (residual {residual:e})")]
    NonConvergence {
        iterations: usize,
        residual: f64,
        trajectory: Vec<Complex64>,
    },

    #[error("sample budget exhausted: best estimate {estimate} with stderr {stderr:e}, target {target:e}")]
    BudgetExceeded {
        estimate: f64,
        stderr: f64,
        target: f64,
    },

    #[error("degenerate spectrum: {0}")]
    Degenerate(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed data: {0}")]
    Format(String),
}

impl LabError {
    pub fn domain(msg: impl Into<String>) -> Self {
        LabError::Domain(msg.into())
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        LabError::Io {
            path: path.into(),
            source,
        }
    }

    /// True for errors caused by invalid inputs rather than by the numerics.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            LabError::Domain(_) | LabError::Constraint { .. } | LabError::Shape { .. } | LabError::Config(_)
        )
    }

    /// Process exit status: 2 for invalid input, 1 for I/O and malformed
    /// files, 3 for numerical aborts.
    pub fn exit_code(&self) -> u8 {
        if self.is_validation() {
            2
        } else if matches!(self, LabError::Io { .. } | LabError::Format(_)) {
            1
        } else {
            3
        }
    }
}

pub type Result<T> = std::result::Result<T, LabError>;
