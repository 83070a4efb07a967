use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("parse error: {0}")]
    Parse(String),

    #[error("unsupported format: {0}")]
    UnsupportedFormat(String),

    #[error("truncated file: {0}")]
    TruncatedFile(String),

    #[error("alignment error: {0}")]
    Alignment(String),

    #[error("out of bounds: {0}")]
    OutOfBounds(String),

    #[error("degenerate band {band}: {reason}")]
    DegenerateBand { band: usize, reason: String },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("shape error: {0}")]
    Shape(String),

    #[error("label error: {0}")]
    Label(String),

    #[error("numeric fault: {0}")]
    NumericFault(String),

    #[error("incompatible checkpoint: {0}")]
    IncompatibleCheckpoint(String),

    #[error("manifest error in region `{region}` ({path}): {reason}")]
    Manifest {
        region: String,
        path: PathBuf,
        reason: String,
    },

    #[error("cannot balance patches: {0}")]
    Balance(String),

    #[error("degenerate split: {0}")]
    DegenerateSplit(String),

    #[error("sample error: {0}")]
    Sample(String),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
