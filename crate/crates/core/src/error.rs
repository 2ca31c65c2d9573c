use thiserror::Error;

/// Errors produced by the hazard-assessment pipeline and its building blocks.
#[derive(Debug, Error)]
pub enum Error {
    #[error("parse error in columns {start}-{end}: {message}")]
    Parse {
        start: usize,
        end: usize,
        message: String,
    },

    #[error("value out of range: {0}")]
    Range(String),

    #[error("unknown observatory code {0:?}")]
    UnknownObservatory(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("rank-deficient system: {0}")]
    RankDeficient(String),

    #[error("singular matrix: {0}")]
    Singular(String),

    #[error("invalid covariance: {0}")]
    InvalidCovariance(String),

    #[error("propagation failed: {0}")]
    Propagation(String),

    #[error("fit aborted at sample {index:?}: {message}")]
    FitAborted {
        index: Option<(usize, usize)>,
        message: String,
    },

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("empty admissible region")]
    EmptyRegion,

    #[error("no converged sample available: {0}")]
    NoConvergedSamples(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
