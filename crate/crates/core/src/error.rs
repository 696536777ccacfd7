//! Crate-wide error type.

use thiserror::Error;

/// Errors produced by geometry I/O, network evaluation, training, and
/// checkpoint handling.
#[derive(Debug, Error)]
pub enum Error {
    /// Malformed mesh / point-cloud / checkpoint file.
    #[error("parse error in {path} at line {line}: {msg}")]
    Parse {
        path: String,
        line: usize,
        msg: String,
    },

    /// Binary container (checkpoint / grid dump) violated its format.
    #[error("invalid {what} data: {msg}")]
    Format { what: &'static str, msg: String },

    /// A mesh operation required a watertight mesh and did not get one.
    #[error("mesh is not watertight: {0}")]
    NotWatertight(String),

    /// Geometry with no usable extent (empty mesh, zero-area surface, ...).
    #[error("degenerate geometry: {0}")]
    DegenerateGeometry(String),

    /// Mismatched array dimensions between two pipeline stages.
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    /// Shape/corpus specification could not be honoured.
    #[error("invalid specification: {0}")]
    InvalidSpec(String),

    /// Scalar field has no iso-crossing anywhere in the sampled box.
    #[error("empty field: {0}")]
    EmptyField(String),

    /// A shape specification encloses no volume at the sampled resolution.
    #[error("empty shape: {0}")]
    EmptyShape(String),

    /// Training loss became NaN or infinite.
    #[error("non-finite loss at step {step}")]
    NonFiniteLoss { step: usize },

    /// Checkpoint is incompatible with the requested network configuration.
    #[error("checkpoint mismatch: {0}")]
    CheckpointMismatch(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn parse(path: impl Into<String>, line: usize, msg: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            line,
            msg: msg.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
