use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    /// Dense storage would exceed the configured entry budget.
    #[error("{what} needs {rows}x{cols} dense entries (limit {limit}); use {alternative} instead")]
    TooLarge {
        what: String,
        rows: usize,
        cols: usize,
        limit: usize,
        alternative: &'static str,
    },

    #[error("matrix is not symmetric: max relative asymmetry {max_asymmetry:e} at ({row}, {col})")]
    NotSymmetric {
        max_asymmetry: f64,
        row: usize,
        col: usize,
    },

    /// A value inside a fit range is zero or negative; `index` is 1-based.
    #[error("non-positive value {value:e} at index {index} inside the fit range")]
    NonPositive { index: usize, value: f64 },

    #[error("index {index} is not covered: {reason}")]
    IndexNotCovered { index: usize, reason: String },
}

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}
