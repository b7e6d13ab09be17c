use thiserror::Error;

/// Errors produced by the model, solvers and experiment engine.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum GnepError {
    /// Vector or matrix sizes do not agree with the game layout.
    #[error("dimension mismatch: expected {expected}, got {found} ({context})")]
    Dimension {
        expected: usize,
        found: usize,
        context: &'static str,
    },

    /// The network or game data violates a structural invariant.
    #[error("invalid structure: {0}")]
    Structure(String),

    /// A gradient was requested from a penalty that is not differentiable.
    #[error("penalty `{0}` is not differentiable; gradient-based updates refuse it")]
    NonDifferentiable(&'static str),

    /// An iterate became non-finite or exceeded the divergence threshold.
    #[error("iterate diverged at iteration {iteration} (norm {norm:e})")]
    Divergence { iteration: usize, norm: f64 },

    /// A sufficient condition of the convergence analysis does not hold.
    #[error("condition violated: {0}")]
    ConditionViolated(String),

    /// An iterative solver stopped before reaching its tolerance.
    #[error("no convergence after {iterations} iterations (residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },

    /// Configuration values are out of range.
    #[error("invalid configuration: {0}")]
    Config(String),

    /// More than half of the Monte-Carlo runs diverged.
    #[error("experiment failed: {} of {total} runs diverged", failed.len())]
    ExperimentFailed {
        /// `(run index, iteration)` for every diverged run.
        failed: Vec<(usize, usize)>,
        total: usize,
    },

    #[error("i/o: {0}")]
    Io(String),
}

impl From<std::io::Error> for GnepError {
    fn from(e: std::io::Error) -> Self {
        GnepError::Io(e.to_string())
    }
}

impl From<serde_json::Error> for GnepError {
    fn from(e: serde_json::Error) -> Self {
        GnepError::Io(e.to_string())
    }
}

impl From<csv::Error> for GnepError {
    fn from(e: csv::Error) -> Self {
        GnepError::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, GnepError>;
