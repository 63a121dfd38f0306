use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum Error {
    /// An argument lies outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// A quadrature or integrator did not reach its requested tolerance.
    #[error("numerical accuracy: {context}: achieved error {achieved:e} > requested {requested:e}")]
    NumericalAccuracy {
        context: String,
        achieved: f64,
        requested: f64,
    },

    /// Tensor extents do not match.
    #[error("shape error: {0}")]
    Shape(String),

    /// A value violates a documented invariant (density matrix, parameters).
    #[error("validation error: {0}")]
    Validation(String),

    /// A computed quantity failed an internal consistency check.
    #[error("consistency error: {0}")]
    Consistency(String),

    /// A bond extent exceeded the configured memory budget.
    #[error("resource limit: bond extent {extent} at step {step} exceeds budget {budget}")]
    Resource {
        step: usize,
        extent: usize,
        budget: usize,
    },

    /// The reaction-coordinate Fock space is too small.
    #[error("Fock truncation insufficient: top-level population {population:e} at t = {time} (n = {n_trunc})")]
    Truncation {
        n_trunc: usize,
        time: f64,
        population: f64,
    },

    #[error("linear algebra failure: {0}")]
    Linalg(String),
}

impl From<ndarray_linalg::error::LinalgError> for Error {
    fn from(e: ndarray_linalg::error::LinalgError) -> Self {
        Error::Linalg(e.to_string())
    }
}
