use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    /// A covariance collapsed (condition number above the allowed bound).
    #[error("degenerate covariance for component {component} (condition number {condition:e})")]
    DegenerateCovariance { component: usize, condition: f64 },

    /// Logical subspace was empty at a delay point; the point is excluded from fits.
    #[error("empty logical subspace (n01 + n10 = 0)")]
    EmptyLogicalSubspace,

    #[error("no oscillation: periodogram peak at DC")]
    NoOscillation,

    #[error("fit did not converge: {0}")]
    NonConvergence(FitDiagnostics),

    #[error("malformed pulse sequence: {0}")]
    MalformedSequence(String),

    #[error("{path}: line {line}: {message}")]
    Parse {
        path: PathBuf,
        line: u64,
        message: String,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }
}

/// Solver state reported on non-convergence (and attached to successful fits).
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct FitDiagnostics {
    pub iterations: usize,
    pub converged: bool,
    pub initial_cost: f64,
    pub final_cost: f64,
    pub last_relative_step: f64,
    pub message: String,
}

impl std::fmt::Display for FitDiagnostics {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "{} after {} iterations (cost {:.3e} -> {:.3e}, last step {:.1e})",
            self.message, self.iterations, self.initial_cost, self.final_cost, self.last_relative_step
        )
    }
}
