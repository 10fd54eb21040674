use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("index ({ix}, {iy}, {iz}) out of range for grid {nx}x{ny}x{nz}")]
    Index {
        ix: usize,
        iy: usize,
        iz: usize,
        nx: usize,
        ny: usize,
        nz: usize,
    },

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    Dimension { expected: usize, actual: usize },

    #[error("grid mismatch: operator is {expected}, field is {actual}")]
    GridMismatch { expected: String, actual: String },

    #[error("non-finite value {value} from {what} at ({x}, {y}, {z})")]
    NonFinite {
        what: &'static str,
        value: f64,
        x: f64,
        y: f64,
        z: f64,
    },

    #[error("wrong boundary kind: {0}")]
    BoundaryKind(String),

    #[error("{path}:{line}: {message}")]
    Parse {
        path: String,
        line: usize,
        message: String,
    },

    #[error("expression error at column {column} near `{token}`: {message}")]
    Expression {
        token: String,
        column: usize,
        message: String,
    },

    #[error("Leja interpolation did not converge within degree {degree} (residual estimate {residual:e})")]
    NonConvergence { degree: usize, residual: f64 },

    #[error("overflow while evaluating divided differences: {0}")]
    Overflow(String),

    #[error("value {value} at index {index} outside the domain of {what}")]
    Domain {
        what: &'static str,
        index: usize,
        value: f64,
    },

    #[error("operator of size {size} exceeds the assembly guard of {limit}")]
    SizeGuard { size: usize, limit: usize },

    #[error("cannot allocate {bytes} bytes for {what}")]
    Allocation { what: &'static str, bytes: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("step {step} failed: {source}")]
    Step {
        step: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
