use thiserror::Error;

/// Broad failure class, used by the CLI to pick an exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Config,
    Data,
    Numeric,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("timestamp {stamp} is not on the expected lattice: {reason}")]
    Alignment { stamp: String, reason: String },

    #[error("unknown site or gauge `{0}`")]
    UnknownSite(String),

    #[error("invalid table: {0}")]
    InvalidTable(String),

    #[error("invalid gauge catalog: {0}")]
    InvalidCatalog(String),

    #[error("region pooling failed: {0}")]
    Pooling(String),

    #[error("{what} is outside its domain: {reason}")]
    Domain { what: String, reason: String },

    #[error("scaler fit failed: feature `{0}` has no present training value")]
    ScalerFit(String),

    #[error("no rows survive complete-case filtering")]
    NoCompleteRows,

    #[error("cannot split {n_rows} rows into {n_folds} folds")]
    Folds { n_rows: usize, n_folds: usize },

    #[error("imputer: {0}")]
    Imputer(String),

    #[error("schema mismatch: expected {expected} feature columns, got {got}")]
    Schema { expected: usize, got: usize },

    #[error("classification training set contains a single class")]
    DegenerateClasses,

    #[error("empty training data")]
    EmptyData,

    #[error("invalid learner parameters: {0}")]
    Params(String),

    #[error("grid search failed: {0}")]
    Tuning(String),

    #[error("fold {fold}: {reason}")]
    Fold { fold: usize, reason: String },

    #[error("configuration: {0}")]
    Config(String),

    #[error("singular linear system: {0}")]
    Singular(String),

    #[error("surface fit: {0}")]
    Surface(String),

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("need at least {needed} samples, got {got}")]
    TooFewSamples { needed: usize, got: usize },

    #[error("reports use different fold plans ({left} vs {right}); refusing to compare")]
    FoldPlanMismatch { left: String, right: String },

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::Config(_) | Error::Params(_) | Error::Domain { .. } | Error::FoldPlanMismatch { .. } => {
                ErrorKind::Config
            }
            Error::Singular(_) | Error::Surface(_) | Error::DegenerateClasses => ErrorKind::Numeric,
            _ => ErrorKind::Data,
        }
    }

    pub(crate) fn domain(what: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Domain { what: what.into(), reason: reason.into() }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
