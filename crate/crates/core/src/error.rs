use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("step parameter mu must be positive, got {0}")]
    NonPositiveStep(f64),

    #[error("invalid bounds at index {index}: lower {lower} > upper {upper}")]
    InvalidBounds { index: usize, lower: f64, upper: f64 },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("point outside the domain of {what}: {detail}")]
    Domain { what: &'static str, detail: String },

    #[error("empty consensus support: every particle has infinite energy")]
    EmptyConsensusSupport,

    #[error("divergence: particle {particle} became non-finite at iteration {iteration}")]
    Divergence { particle: usize, iteration: usize },

    #[error("singular Fisher information matrix")]
    SingularFisher,

    #[error("quadrature did not reach tolerance on [{a}, {b}]")]
    Quadrature { a: f64, b: f64 },
}
