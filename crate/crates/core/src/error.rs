use thiserror::Error;

/// Errors raised by the numerical routines.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("matrix is not positive definite: {0}")]
    NotPositiveDefinite(String),

    #[error("singular matrix: {0}")]
    Singular(String),

    #[error("invalid block pattern: {0}")]
    InvalidPattern(String),

    #[error("matrix does not conform to the block pattern (largest off-pattern entry {max_entry:.3e})")]
    PatternViolation { max_entry: f64 },

    #[error("infeasible instance: {0}")]
    Infeasible(String),

    #[error("not applicable: {0}")]
    NotApplicable(String),

    #[error("noise covariance is not dominated by the source covariance (min eigenvalue of the difference {min_eigenvalue:.3e})")]
    NoiseNotDominated { min_eigenvalue: f64 },

    #[error("matrix is not block-circulant: {0}")]
    NotBlockCirculant(String),

    #[error("no convergence after {iterations} iterations (residual {residual:.3e})")]
    NoConvergence { iterations: usize, residual: f64 },

    #[error("constraint violations: {}", .0.join("; "))]
    ConstraintViolations(Vec<String>),

    #[error("search failed: {0}")]
    SearchFailed(String),
}

impl Error {
    /// True for failures of the numerics rather than of the input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::Singular(_) | Error::NoConvergence { .. } | Error::SearchFailed(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
