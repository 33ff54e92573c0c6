use thiserror::Error;

#[derive(Debug, Error)]
pub enum SlideError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("view `{view}` is identically zero after column centering")]
    ZeroView { view: String },

    #[error("no views supplied")]
    EmptyInput,

    #[error("integer overflow: {0}")]
    Overflow(String),

    #[error("refusing to materialise {count} structures (limit {limit})")]
    TooLarge { count: String, limit: u64 },

    #[error("invalid lambda grid: {0}")]
    BadGrid(String),

    #[error("matrix is rank deficient: singular value {smallest:e} below cutoff {cutoff:e}")]
    RankDeficient { smallest: f64, cutoff: f64 },

    #[error("non-finite value encountered in {0}")]
    NonFinite(&'static str),

    #[error("structure has rank {r}, but at most {max} components fit this data")]
    InfeasibleRank { r: usize, max: usize },

    #[error("cannot split {n} rows into {folds} row folds")]
    TooFewSamples { n: usize, folds: usize },

    #[error("view {view} has {p} columns, fewer than {folds} column folds")]
    TooFewColumns { view: usize, p: usize, folds: usize },

    #[error("signal for view {0} has zero Frobenius norm")]
    ZeroSignal(usize),

    #[error("exact decomposition supports at most 3 views, got {0}")]
    UnsupportedViews(usize),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("linear algebra backend failure: {0}")]
    Linalg(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl From<ndarray_linalg::error::LinalgError> for SlideError {
    fn from(e: ndarray_linalg::error::LinalgError) -> Self {
        SlideError::Linalg(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, SlideError>;
