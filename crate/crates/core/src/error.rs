use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid geometry: {0}")]
    Geometry(String),

    #[error("site count overflows addressable memory: {0}")]
    Overflow(String),

    #[error("value out of range: {0}")]
    OutOfRange(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("geometry mismatch: expected {expected} sites, got {got}")]
    GeometryMismatch { expected: usize, got: usize },

    #[error("isometry not valid for this boundary condition: {0}")]
    InvalidIsometry(String),

    #[error("budget exceeded: {0}")]
    Budget(String),

    #[error("numerical breakdown: {0}")]
    Numerical(String),

    #[error("quadrature did not converge: {0}")]
    Quadrature(String),

    #[error("importance weights degenerate (effective sample size {ess:.1} of {samples}); use mcmc")]
    DegenerateWeights { ess: f64, samples: usize },

    #[error("checkpoint integrity error: {0}")]
    Integrity(String),

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
