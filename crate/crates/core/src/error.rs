//! Error type shared across the crate.
//!
//! Variants map onto the failure classes the CLI distinguishes by exit code:
//! configuration, data/parse, numeric, and plain I/O.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Operand shapes are incompatible for the named operation.
    #[error("{op}: incompatible shapes {lhs:?} and {rhs:?}")]
    ShapeMismatch {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },

    /// An API contract was violated (e.g. backward on a non-scalar node).
    #[error("contract violation: {0}")]
    Contract(String),

    /// Invalid configuration value or combination.
    #[error("invalid config: {0}")]
    Config(String),

    /// A data file could not be parsed. `line` is 1-based; for JSON frame
    /// arrays it is the frame index instead of a byte line.
    #[error("{path}:{line}: {msg}")]
    Parse {
        path: String,
        line: usize,
        msg: String,
    },

    /// Dataset-level problem that is not a single-file parse error.
    #[error("data error: {0}")]
    Data(String),

    /// Numeric failure (NaN loss, non-finite values where finite required).
    #[error("numeric failure: {0}")]
    Numeric(String),

    /// Checkpoint file is malformed or inconsistent with the request.
    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    /// I/O failure with the offending path attached.
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
