//! Error types shared across the crate.

use nalgebra::Complex;

/// Crate-wide error type.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Incompatible dimensions, naming the offending site.
    #[error("shape mismatch in {context}: expected {expected}, found {found}")]
    Shape {
        context: String,
        expected: String,
        found: String,
    },

    /// Input outside the mathematical domain of an operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// An iterative routine ran out of its iteration budget.
    #[error("{context}: no convergence after {iterations} iterations")]
    NoConvergence { context: String, iterations: usize },

    /// Eigenvalue iteration failed; carries whatever estimates were produced.
    #[error("eigenvalue iteration: no convergence after {iterations} iterations ({} partial values)", partial.len())]
    EigenNoConvergence {
        iterations: usize,
        partial: Vec<Complex<f64>>,
    },

    /// A documented precondition of the operation was violated by the caller.
    #[error("precondition violated: {0}")]
    Precondition(String),

    /// Request outside the supported problem class.
    #[error("unsupported: {0}")]
    Unsupported(String),

    /// Malformed or inconsistent model description.
    #[error("invalid model: {0}")]
    InvalidModel(String),
}

impl Error {
    pub fn shape(context: impl Into<String>, expected: impl Into<String>, found: impl Into<String>) -> Self {
        Error::Shape {
            context: context.into(),
            expected: expected.into(),
            found: found.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
