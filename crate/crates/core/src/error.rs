use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("dataset {0} contains no interactions")]
    EmptyDataset(PathBuf),

    #[error("invalid binary file: {0}")]
    Format(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("graph with {nodes} nodes exceeds the dense solver limit of {limit}; use APPNP iteration instead")]
    TooLargeForDense { nodes: usize, limit: usize },

    #[error("variance reduction memory is stale (memory epoch {memory}, state epoch {state})")]
    StaleMemory { memory: u64, state: u64 },

    #[error("non-finite value in {what} at iteration {iteration}")]
    NonFinite { what: &'static str, iteration: u64 },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("id out of range: {0}")]
    OutOfRange(String),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
