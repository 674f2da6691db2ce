use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },

    #[error("corrupt data in {path}: {detail}")]
    Corrupt { path: PathBuf, detail: String },

    #[error("transport failure: {0}")]
    Transport(String),

    #[error("state error: {0}")]
    State(String),

    #[error("call {ordinal} aborted: {reason}")]
    CallAborted { ordinal: u64, reason: String },

    #[error("traffic invariant violated: {0}")]
    InvariantViolation(String),

    #[error("unrecoverable: {0}")]
    Unrecoverable(String),
}

impl EngineError {
    pub fn io(context: impl Into<String>, source: std::io::Error) -> Self {
        EngineError::Io { context: context.into(), source }
    }
}

pub type Result<T> = std::result::Result<T, EngineError>;

/// Attach a human-readable context to io::Result values.
pub trait IoContext<T> {
    fn io_ctx(self, context: impl Into<String>) -> Result<T>;
}

impl<T> IoContext<T> for std::io::Result<T> {
    fn io_ctx(self, context: impl Into<String>) -> Result<T> {
        self.map_err(|e| EngineError::io(context, e))
    }
}
