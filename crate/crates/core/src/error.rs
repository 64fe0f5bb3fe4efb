//! Error type shared by every module of the crate.

use thiserror::Error;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("unbalanced panel: missing cell for unit `{unit}` at period {period}")]
    UnbalancedPanel { unit: String, period: i64 },

    #[error("duplicate row for unit `{unit}` at period {period} (row {row})")]
    DuplicateCell {
        unit: String,
        period: i64,
        row: usize,
    },

    #[error("parse error at row {row}: {message}")]
    Parse { row: usize, message: String },

    #[error("invalid adoption `{value}` for unit `{unit}`")]
    InvalidAdoption { unit: String, value: String },

    #[error("panel has no units")]
    EmptyPanel,

    #[error("fixed effect for {what} cannot be estimated: no untreated cells")]
    InestimableEffect { what: String },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("non-finite entry at ({row}, {col})")]
    NonFinite { row: usize, col: usize },

    #[error("rank deficient: {axis} {index} has no observed cells")]
    RankDeficient { axis: &'static str, index: usize },

    #[error("degenerate fit: no singular value exceeds {threshold}")]
    DegenerateFit { threshold: f64 },

    #[error("SVD failed to converge")]
    SvdFailure,

    #[error("empty split: {0}")]
    EmptySplit(String),

    #[error("empty aggregate: {0}")]
    EmptyAggregate(String),

    #[error("event study has no post-treatment entries")]
    NoPostEntries,

    #[error("event study has no pre-treatment entries")]
    NoPreEntries,

    #[error("unit {0} is never treated and has no gap series")]
    NoGap(usize),

    #[error("in-time placebo excluded every unit")]
    EmptyPlacebo,

    #[error("collinear design: {0}")]
    Collinear(String),

    #[error("cross-validation could not form valid folds after {attempts} attempts")]
    FoldConstruction { attempts: usize },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// Broad failure class, used by the command-line front end to pick an exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Config,
    Data,
    Numerical,
}

impl Error {
    pub fn class(&self) -> ErrorClass {
        match self {
            Error::InvalidConfig(_) | Error::Json(_) => ErrorClass::Config,
            Error::UnbalancedPanel { .. }
            | Error::DuplicateCell { .. }
            | Error::Parse { .. }
            | Error::InvalidAdoption { .. }
            | Error::EmptyPanel
            | Error::DimensionMismatch(_)
            | Error::Io(_)
            | Error::Csv(_) => ErrorClass::Data,
            _ => ErrorClass::Numerical,
        }
    }

    /// Process exit code for this error: 2 config, 3 data, 4 numerical.
    pub fn exit_code(&self) -> i32 {
        match self.class() {
            ErrorClass::Config => 2,
            ErrorClass::Data => 3,
            ErrorClass::Numerical => 4,
        }
    }
}
