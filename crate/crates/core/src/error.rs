use std::io;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Errors raised by the retrieval engine.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimMismatch { expected: usize, found: usize },

    #[error("vector has zero norm")]
    ZeroVector,

    #[error("vector contains a non-finite component")]
    NonFinite,

    #[error("empty vector")]
    EmptyVector,

    #[error("invalid fusion weights alpha={alpha} beta={beta}")]
    InvalidWeights { alpha: f64, beta: f64 },

    #[error("invalid weight schedule: {0}")]
    InvalidSchedule(String),

    #[error("duplicate corpus id {0}")]
    DuplicateId(u64),

    #[error("unknown corpus id {0}")]
    UnknownId(u64),

    #[error("index is empty")]
    EmptyIndex,

    #[error("unknown target {0:?}")]
    UnknownTarget(String),

    #[error("format error: {0}")]
    Format(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("template error: {0}")]
    Template(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("session is closed")]
    SessionClosed,

    #[error("turn limit of {0} reached")]
    TurnLimitExceeded(usize),

    #[error("session has no turns")]
    NoTurns,

    #[error(transparent)]
    Backend(#[from] BackendError),

    #[error(transparent)]
    Io(#[from] io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

/// Failures of an external (or reference) model backend.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum BackendError {
    #[error("request to {endpoint} timed out")]
    Timeout { endpoint: String },

    #[error("backend returned status {status}")]
    BadStatus { status: u16 },

    #[error("backend embedding has dimension {found}, expected {expected}")]
    DimMismatch { expected: usize, found: usize },

    #[error("malformed backend response: {0}")]
    MalformedResponse(String),

    #[error("backend returned an empty completion")]
    EmptyCompletion,

    #[error("transport error: {0}")]
    Transport(String),

    #[error("invalid backend input: {0}")]
    InvalidInput(String),

    #[error("backend unavailable: {0}")]
    Unavailable(String),
}

impl Error {
    /// Short machine-readable code, used by the service error envelope.
    pub fn code(&self) -> &'static str {
        match self {
            Error::DimMismatch { .. } => "dim_mismatch",
            Error::ZeroVector => "zero_vector",
            Error::NonFinite => "non_finite",
            Error::EmptyVector => "empty_vector",
            Error::InvalidWeights { .. } => "invalid_weights",
            Error::InvalidSchedule(_) => "invalid_schedule",
            Error::DuplicateId(_) => "duplicate_id",
            Error::UnknownId(_) => "unknown_id",
            Error::EmptyIndex => "empty_index",
            Error::UnknownTarget(_) => "unknown_target",
            Error::Format(_) => "format_error",
            Error::InvalidInput(_) => "invalid_input",
            Error::Template(_) => "template_error",
            Error::Config(_) => "config_error",
            Error::SessionClosed => "session_closed",
            Error::TurnLimitExceeded(_) => "turn_limit_exceeded",
            Error::NoTurns => "no_turns",
            Error::Backend(_) => "backend_failure",
            Error::Io(_) => "io_error",
            Error::Json(_) => "json_error",
            Error::Csv(_) => "csv_error",
        }
    }
}
