use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Errors produced anywhere in the library.
#[derive(Debug, Error)]
pub enum Error {
    /// Expression text failed to parse; `offset` is a byte position into
    /// the source string.
    #[error("parse error at byte {offset}: {message}")]
    Parse { offset: usize, message: String },

    /// Expression evaluation hit a domain error (division by zero, log of
    /// a non-positive value, ...) or produced a non-finite value.
    #[error("evaluation error in `{expr}` at t={t}, x={x}: {message}")]
    Eval {
        expr: String,
        t: f64,
        x: f64,
        message: String,
    },

    /// A model is structurally malformed (bad indices, pmf not summing to
    /// one, unsorted schedule, ...).
    #[error("invalid model: {0}")]
    Model(String),

    /// An ODE solve failed (step-size underflow, non-finite field value).
    #[error("solver failure: {0}")]
    Solver(String),

    /// Adaptive quadrature did not converge to the requested tolerance.
    #[error("quadrature failure: {0}")]
    Quadrature(String),

    /// A linear solve failed (singular system, residual too large).
    #[error("linear algebra failure: {0}")]
    Linear(String),

    /// A simulation-time thinning bound was violated; the declared bound
    /// does not dominate the true rate.
    #[error("simulation bound violated: {0}")]
    Bound(String),

    /// A model-file document does not match the expected schema.
    #[error("model file error: {0}")]
    ModelFile(String),
}
