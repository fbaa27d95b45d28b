use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),

    #[error("invalid hyperparameters: {0}")]
    InvalidHyper(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    /// Cholesky factorization hit a non-positive pivot.
    #[error("factorization failed at row {row}: pivot {pivot:e}")]
    Factorization { row: usize, pivot: f64 },

    #[error("risk level must lie in (0, 1), got {0}")]
    InvalidAlpha(f64),

    #[error("non-finite value {value} at z = {z:?}")]
    NonFinite { z: Vec<f64>, value: f64 },

    #[error("no lacing value found; this contradicts the existence guarantee and points to a VaR bug")]
    NoLacingValue,

    #[error("VaR interval inverted: lo {lo} > hi {hi}")]
    InvertedInterval { lo: f64, hi: f64 },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("unknown problem `{0}`")]
    UnknownProblem(String),

    #[error("surrogate training diverged: {0}")]
    Diverged(String),

    #[error("iteration {iteration}: {source}")]
    AtIteration {
        iteration: usize,
        #[source]
        source: Box<Error>,
    },
}

pub type Result<T> = std::result::Result<T, Error>;
