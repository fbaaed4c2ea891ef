use thiserror::Error;

pub type Result<T> = std::result::Result<T, ServiceError>;

#[derive(Debug, Error)]
pub enum ServiceError {
    #[error("encoder unavailable: {0}")]
    EncoderUnavailable(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("invalid request: {0}")]
    InvalidRequest(String),

    #[error("unknown session {0}")]
    SessionNotFound(String),

    #[error("observation {0} has not appeared in this session's results")]
    InvalidMark(u64),

    #[error("session has no results to export")]
    EmptyExport,

    #[error("corrupt session log {path}: {message}")]
    SessionLog { path: String, message: String },

    #[error(transparent)]
    Core(#[from] ecosearch_core::Error),

    #[error(transparent)]
    Analysis(#[from] ecosearch_analysis::AnalysisError),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
