use std::path::PathBuf;

/// Errors reported by index construction, search, and the on-disk formats.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    /// A vector file (fvecs/bvecs/ivecs) could not be parsed. `offset` is the
    /// byte position of the record where parsing failed.
    #[error("{path}: {detail} (byte offset {offset})")]
    Format {
        path: PathBuf,
        detail: String,
        offset: u64,
    },

    #[error("invalid config: {0}")]
    InvalidConfig(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimMismatch { expected: usize, got: usize },

    #[error("duplicate vector id {0}")]
    DuplicateId(u64),

    #[error("unknown vector id {0}")]
    UnknownId(u64),

    /// An index file failed validation (bad magic, unsupported version, or a
    /// structurally inconsistent payload).
    #[error("bad index file: {0}")]
    Persistence(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn format(path: impl Into<PathBuf>, detail: impl Into<String>, offset: u64) -> Self {
        Error::Format {
            path: path.into(),
            detail: detail.into(),
            offset,
        }
    }
}
