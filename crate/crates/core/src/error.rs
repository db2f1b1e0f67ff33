//! Error types shared across the crate.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Input rejected before any numerics ran (dimension or invariant
    /// violations). Holds one message per violation.
    #[error("validation failed:\n{}", .0.join("\n"))]
    Validation(Vec<String>),

    /// A matrix that must be positive definite failed its Cholesky
    /// factorization.
    #[error("{context}: matrix is not positive definite")]
    NotPositiveDefinite { context: String },

    /// Non-finite value produced at a known timepoint.
    #[error("non-finite value at t={t} in {context}")]
    NonFinite { t: usize, context: String },

    /// Forecast variance lost positivity; analytically impossible, so it
    /// signals numerical corruption of the recursion.
    #[error("forecast variance q_t = {q} <= 0 at t={t}; filter state is corrupt")]
    NonPositiveForecastVariance { t: usize, q: f64 },

    /// Backward sampling hit a numerically singular innovation covariance.
    #[error("innovation covariance R at t={t} is numerically singular (rcond ~ {rcond:.3e})")]
    SingularInnovation { t: usize, rcond: f64 },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// Line search could not make progress; the caller receives the best
    /// iterate alongside this diagnostic.
    #[error("line search failed at iteration {iteration}: {detail}")]
    LineSearch { iteration: usize, detail: String },

    /// One or more posterior draws failed; indices are reported so the rest
    /// of a batch can be inspected.
    #[error("{} posterior draw(s) failed (first: draw {first}: {first_error})", .indices.len())]
    DrawFailures {
        indices: Vec<usize>,
        first: usize,
        first_error: String,
    },
}

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub fn not_pd(context: impl Into<String>) -> Self {
        Error::NotPositiveDefinite {
            context: context.into(),
        }
    }
}
