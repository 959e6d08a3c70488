use std::path::PathBuf;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("state needs {needed} amplitudes but the memory cap is {cap}")]
    MemoryCap { needed: usize, cap: usize },
    #[error("numerical rank is {found}, expected {expected}")]
    Rank { found: usize, expected: usize },
    #[error("solver stopped with status {status}: {detail}")]
    Solver { status: String, detail: String },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("serialization failed: {0}")]
    Serde(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidInput(msg.into())
}
