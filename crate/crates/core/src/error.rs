//! Error types shared across the core crate.

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("schema violation: {0}")]
    Schema(String),

    #[error("duplicate_event_id: {0}")]
    DuplicateEventId(String),

    #[error("corrupted record at sequence {seq} (byte offset {offset}): {reason}")]
    Corrupt {
        seq: u64,
        offset: u64,
        reason: String,
    },

    #[error("storage failure: {0}")]
    Io(#[from] std::io::Error),

    #[error("empty_context: error_text and query_text are both empty")]
    EmptyContext,

    #[error("invalid_age: age_days must be non-negative, got {0}")]
    InvalidAge(f64),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("unknown_feedback_label: {label:?}; accepted labels: {accepted}")]
    UnknownFeedbackLabel { label: String, accepted: String },

    #[error("unknown_retrieval_event: {0}")]
    UnknownRetrievalEvent(String),

    #[error("unknown memory: {0}")]
    UnknownMemory(String),

    #[error("review_required: transition to {0} needs a valid review token")]
    ReviewRequired(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("config: {0}")]
    Config(String),
}

impl Error {
    /// Stable machine-readable code for the error variant.
    pub fn code(&self) -> &'static str {
        match self {
            Error::Schema(_) => "schema_violation",
            Error::DuplicateEventId(_) => "duplicate_event_id",
            Error::Corrupt { .. } => "corrupted_record",
            Error::Io(_) => "storage_failure",
            Error::EmptyContext => "empty_context",
            Error::InvalidAge(_) => "invalid_age",
            Error::DimensionMismatch { .. } => "dimension_mismatch",
            Error::UnknownFeedbackLabel { .. } => "unknown_feedback_label",
            Error::UnknownRetrievalEvent(_) => "unknown_retrieval_event",
            Error::UnknownMemory(_) => "unknown_memory",
            Error::ReviewRequired(_) => "review_required",
            Error::InvalidArgument(_) => "invalid_argument",
            Error::InsufficientData(_) => "insufficient_data",
            Error::Config(_) => "config",
        }
    }

    /// True when the failure is caused by the caller's input rather than the
    /// process or the disk.
    pub fn is_client_error(&self) -> bool {
        !matches!(
            self,
            Error::Io(_) | Error::Corrupt { .. } | Error::Config(_)
        )
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Schema(e.to_string())
    }
}
