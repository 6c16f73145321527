use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Broad failure class, used by the CLI to pick an exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorCategory {
    Config,
    Data,
    Transport,
    Internal,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    Param(String),

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    Dimension { expected: usize, actual: usize },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("unknown label `{0}`")]
    UnknownLabel(String),

    #[error("empty dataset")]
    EmptyDataset,

    #[error("non-finite value at position {0}")]
    NonFinite(usize),

    #[error("malformed data: {0}")]
    Malformed(String),

    #[error("unsupported model format version {found} (this build reads {supported})")]
    Version { found: u16, supported: u16 },

    #[error("checksum mismatch: stored {stored:#010x}, computed {computed:#010x}")]
    Checksum { stored: u32, computed: u32 },

    #[error("truncated input: {0}")]
    Truncated(&'static str),

    #[error("transport error: {0}")]
    Transport(String),

    #[error("party {party} timed out waiting for party {peer}")]
    Straggler { party: usize, peer: usize },

    #[error("federation aborted: {0}")]
    Aborted(String),

    #[error("network error fetching {url} after {attempts} attempts: {reason}")]
    Network { url: String, attempts: u32, reason: String },

    #[error("content hash mismatch for {url}: cached {expected}, downloaded {actual}")]
    HashMismatch {
        url: String,
        expected: String,
        actual: String,
    },

    #[error("config error: {0}")]
    Config(String),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("{path}: {source}")]
    File { path: PathBuf, source: std::io::Error },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn category(&self) -> ErrorCategory {
        match self {
            Error::Config(_) | Error::Param(_) => ErrorCategory::Config,
            Error::Dimension { .. }
            | Error::Shape(_)
            | Error::UnknownLabel(_)
            | Error::EmptyDataset
            | Error::NonFinite(_)
            | Error::Malformed(_)
            | Error::Version { .. }
            | Error::Checksum { .. }
            | Error::Truncated(_)
            | Error::Csv(_)
            | Error::File { .. }
            | Error::HashMismatch { .. } => ErrorCategory::Data,
            Error::Transport(_) | Error::Straggler { .. } | Error::Aborted(_) | Error::Network { .. } => {
                ErrorCategory::Transport
            }
            Error::Io(_) | Error::Json(_) => ErrorCategory::Internal,
        }
    }

    pub(crate) fn file(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::File {
            path: path.into(),
            source,
        }
    }
}

pub(crate) fn check_dim(expected: usize, actual: usize) -> Result<()> {
    if expected != actual {
        return Err(Error::Dimension { expected, actual });
    }
    Ok(())
}

pub(crate) fn check_finite(x: &[f64]) -> Result<()> {
    match x.iter().position(|v| !v.is_finite()) {
        Some(i) => Err(Error::NonFinite(i)),
        None => Ok(()),
    }
}
