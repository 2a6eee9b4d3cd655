use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("rank-deficient design: columns {columns:?} fail the conditioning threshold")]
    RankDeficient { columns: Vec<usize> },

    #[error("only {admissible} admissible features, {requested} requested")]
    InsufficientFeatures { requested: usize, admissible: usize },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error(
        "truncation region carries no representable probability mass; widen the scan range (--z-mult)"
    )]
    MassUnderflow,

    #[error("internal invariant violated: {0}")]
    Invariant(String),

    #[error("input error: {0}")]
    Input(String),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
