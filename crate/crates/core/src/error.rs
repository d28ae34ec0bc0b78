use thiserror::Error;

/// Errors raised by the reconstruction pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("index out of range: {0}")]
    Index(String),

    #[error("point ({x}, {y}) is outside the admissible region y > 0")]
    Domain { x: f64, y: f64 },

    #[error("basis construction is ill-conditioned: {0}")]
    Conditioning(String),

    #[error("normal matrix is singular: {0}")]
    Singular(String),

    #[error("linear solver did not converge after {iterations} iterations (relative residual {residual:.3e})")]
    NoConvergence { iterations: usize, residual: f64 },

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("unknown test id {0} (expected 1, 2, 3 or 4)")]
    UnknownTest(u32),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
