use thiserror::Error;

/// Errors raised by the model, the persistence layer and the controllers.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("matrix is singular: {0}")]
    Singular(&'static str),

    #[error("matrix is not positive definite: {0}")]
    NotPositiveDefinite(&'static str),

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("invalid index set: {0}")]
    InvalidIndex(String),

    #[error("transition from a state to itself ({0}) is handled by the dwell counter")]
    SelfTransition(usize),

    #[error("cannot merge cluster {0} with itself")]
    SelfMerge(usize),

    #[error("frame count mismatch: model has {expected} frames, got {got}")]
    FrameCount { expected: usize, got: usize },

    #[error("unreachable model: forward variable vanished at step {0}")]
    Unreachable(usize),

    #[error("input far from model: all responsibilities underflow")]
    FarFromModel,

    #[error("riccati iteration did not converge within {0} steps")]
    NoConvergence(usize),

    #[error("non-finite riccati state at step {0}")]
    RiccatiBlowUp(usize),

    #[error("unsupported model file version {found} (expected {expected})")]
    Version { found: u32, expected: u32 },

    #[error("schema violation: {0}")]
    Schema(String),
}

impl Error {
    /// True for failures of a numerical routine, as opposed to bad input data.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::Singular(_)
                | Error::NotPositiveDefinite(_)
                | Error::Unreachable(_)
                | Error::FarFromModel
                | Error::NoConvergence(_)
                | Error::RiccatiBlowUp(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
