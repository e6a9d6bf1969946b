use thiserror::Error;

/// Errors raised by model construction, sampling and estimation.
#[derive(Debug, Error)]
pub enum Error {
    #[error("directed cycle through {0:?}")]
    Cycle(Vec<String>),

    #[error("unknown variable `{0}`")]
    UnknownVariable(String),

    #[error("invalid graph: {0}")]
    InvalidGraph(String),

    #[error("cannot intervene on the outcome `{0}`")]
    InterveneOnOutcome(String),

    #[error("arity mismatch: expected {expected} values, got {got}")]
    Arity { expected: usize, got: usize },

    #[error("matrix is not positive definite ({0})")]
    NotPositiveDefinite(String),

    #[error("rank deficient design: {0}")]
    RankDeficient(String),

    #[error("not enough data: {0}")]
    InsufficientData(String),

    #[error("insufficient overlap, uncovered grid points: {0:?}")]
    InsufficientOverlap(Vec<f64>),

    #[error("invalid regime: {0}")]
    InvalidRegime(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("column mismatch: {0}")]
    ColumnMismatch(String),

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Numerical failures as opposed to malformed input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::NotPositiveDefinite(_)
                | Error::RankDeficient(_)
                | Error::InsufficientData(_)
                | Error::InsufficientOverlap(_)
                | Error::Degenerate(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
