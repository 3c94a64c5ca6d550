use thiserror::Error;

pub type Result<T> = std::result::Result<T, GlaaError>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GlaaError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("rank {rank} exceeds available dimension {available} ({context})")]
    RankTooLarge {
        rank: usize,
        available: usize,
        context: String,
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("data must be centered before estimating the moment tensor")]
    NotCentered,

    #[error("matrix is singular or not positive definite: {0}")]
    Singular(String),

    #[error("too few observations: {0}")]
    TooFewObservations(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("tuning failed: {0}")]
    Tuning(String),
}

impl GlaaError {
    pub(crate) fn dims(msg: impl Into<String>) -> Self {
        GlaaError::DimensionMismatch(msg.into())
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        GlaaError::InvalidArgument(msg.into())
    }
}
