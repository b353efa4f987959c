use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by the operator pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error in {context}: {message}")]
    Parse { context: String, message: String },

    #[error("property `{property}` of element {index}: {message}")]
    Property {
        property: String,
        index: usize,
        message: String,
    },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("covariance of splat {0} is numerically singular")]
    SingularCovariance(usize),

    #[error("factorization failed at pivot {pivot} (value {value:e})")]
    Factorization { pivot: usize, value: f64 },

    #[error("degenerate triangle {0:?} has zero area")]
    DegenerateTriangle([usize; 3]),

    #[error("eigensolver converged {converged} of {requested} eigenpairs after {iterations} operator applications")]
    NoConvergence {
        converged: usize,
        requested: usize,
        iterations: usize,
    },

    #[error("all {0} computed eigenvalues are below the zero threshold; increase K")]
    IncreaseK(usize),

    #[error("vertex {0} is not reachable from the source")]
    Unreachable(usize),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(context: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Parse {
            context: context.into(),
            message: message.into(),
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
