use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: String, found: String },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("empty evaluation region: {0}")]
    EmptyRegion(String),

    #[error("bad magic {found:?}, expected \"MSEQ\"")]
    BadMagic { found: [u8; 4] },

    #[error("unsupported mseq version {0}")]
    BadVersion(u8),

    #[error("truncated input: expected {expected} bytes, got {actual}")]
    Truncated { expected: u64, actual: u64 },

    #[error("nonzero padding bits in frame {frame}, row {row}")]
    DirtyPadding { frame: u32, row: u32 },

    #[error("{0} trailing bytes after payload")]
    TrailingBytes(u64),

    #[error("write failed at byte offset {offset}: {source}")]
    Write {
        offset: u64,
        #[source]
        source: std::io::Error,
    },

    #[error("frame {index} missing: {path}")]
    MissingFrame { index: usize, path: PathBuf },

    #[error("malformed image {path}: {reason}")]
    Image { path: PathBuf, reason: String },

    #[error("manifest mismatch: {0}")]
    Manifest(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn dims(expected: impl ToString, found: impl ToString) -> Self {
        Error::DimensionMismatch {
            expected: expected.to_string(),
            found: found.to_string(),
        }
    }
}
