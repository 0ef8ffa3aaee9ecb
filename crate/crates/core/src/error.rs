use thiserror::Error;

/// Errors produced anywhere in the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("non-finite value: {0}")]
    NonFinite(String),
    #[error("joints without any grid cell: {missing:?} (cells per joint: {coverage:?})")]
    Uncovered { missing: Vec<usize>, coverage: Vec<usize> },
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("incompatible: {0}")]
    Incompatible(String),
    #[error("numerical abort in epoch {epoch}, batch {batch}: {msg}")]
    NumericalAbort { epoch: usize, batch: usize, msg: String },
    #[error("degenerate sample {sample}: ground-truth joints are collinear")]
    Degenerate { sample: usize },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

macro_rules! shape_err {
    ($($arg:tt)*) => {
        $crate::error::Error::Shape(format!($($arg)*))
    };
}

macro_rules! invalid {
    ($($arg:tt)*) => {
        $crate::error::Error::InvalidArgument(format!($($arg)*))
    };
}

pub(crate) use invalid;
pub(crate) use shape_err;
