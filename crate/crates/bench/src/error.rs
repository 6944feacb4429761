//! Errors raised by the generator and the replay harness.

use thiserror::Error;

pub type Result<T, E = BenchError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("case file: {0}")]
    CaseFile(String),

    #[error("server spawn failed: {0}")]
    Spawn(String),

    #[error("server protocol: {0}")]
    Protocol(String),

    #[error("store directory {0} is not empty")]
    StoreNotEmpty(std::path::PathBuf),

    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error(transparent)]
    Core(#[from] memctl_core::Error),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}
