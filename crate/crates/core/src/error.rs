use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// A precondition on an argument or configuration value was violated.
    #[error("domain error: {0}")]
    Domain(String),
    /// A binary file could not be decoded.
    #[error("format error at byte {offset}: {message}")]
    Format { offset: u64, message: String },
    /// A text record could not be parsed.
    #[error("line {line}: {message}")]
    Record { line: u64, message: String },
    #[error("not found: {0}")]
    NotFound(String),
    #[error("conflict: {0}")]
    Conflict(String),
    /// A pipeline stage failed; wraps the underlying cause.
    #[error("{stage}: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn domain(msg: impl Into<String>) -> Error {
    Error::Domain(msg.into())
}

impl Error {
    pub(crate) fn in_stage(self, stage: &'static str) -> Error {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }
}
