use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("pixel ({row}, {col}) is outside the {height}x{width} cube")]
    OutOfBounds {
        row: usize,
        col: usize,
        height: usize,
        width: usize,
    },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid cube: {0}")]
    InvalidCube(String),

    #[error("non-finite value {value} at pixel ({row}, {col}), band {band}")]
    NonFinite {
        row: usize,
        col: usize,
        band: usize,
        value: f64,
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("K/S value {0} is negative")]
    NegativeKs(f64),

    #[error("degenerate endmember geometry after {selected} selection(s): {reason}")]
    Degenerate { selected: usize, reason: String },

    #[error("endmember {index} is an all-zero column; the NNLS system is ill-posed")]
    ZeroColumn { index: usize },

    #[error("NNLS did not converge within {iterations} outer iterations (residual norm {residual:.3e})")]
    NnlsNoConvergence { iterations: usize, residual: f64 },

    #[error("pixel ({row}, {col}): {source}")]
    AtPixel {
        row: usize,
        col: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("class {0} has no members; its mean spectrum is undefined")]
    EmptyClass(usize),

    #[error("{0}")]
    Training(String),

    #[error("{stage}: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(path: impl Into<PathBuf>, message: impl Into<String>) -> Self {
        Error::Format {
            path: path.into(),
            message: message.into(),
        }
    }

    pub(crate) fn at_stage(self, stage: &'static str) -> Self {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }
}
