use std::path::PathBuf;

use thiserror::Error;

/// Errors raised by the volume, uncertainty, metric and statistics routines.
#[derive(Debug, Error)]
pub enum QaError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed header {path}: {msg}")]
    Header { path: PathBuf, msg: String },

    #[error("payload length mismatch: header implies {expected} bytes, found {actual}")]
    PayloadLength { expected: usize, actual: usize },

    #[error("data length mismatch: expected {expected} values, found {actual}")]
    DataLength { expected: usize, actual: usize },

    #[error("dtype mismatch: expected {expected}, found {actual}")]
    DType {
        expected: &'static str,
        actual: &'static str,
    },

    #[error("invalid voxel spacing {0:?}: components must be positive and finite")]
    Spacing([f64; 3]),

    #[error("invalid dims {0:?}: every extent must be at least 1")]
    Dims([usize; 3]),

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("{what} value {value} outside [{lo}, {hi}]")]
    OutOfRange {
        what: &'static str,
        value: f64,
        lo: f64,
        hi: f64,
    },

    #[error("mask contains values other than 0 and 1")]
    NotBinary,

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("expected {expected} channel(s), found {actual}")]
    Channels { expected: usize, actual: usize },

    #[error("region of interest is empty")]
    EmptyRoi,

    #[error("distance transform needs at least one seed voxel")]
    EmptySeeds,

    #[error("both masks are empty; ROI undefined")]
    EmptyMasks,

    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

pub type Result<T, E = QaError> = std::result::Result<T, E>;

impl QaError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        QaError::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        QaError::InvalidArgument(msg.into())
    }
}
