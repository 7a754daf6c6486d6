use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch in {op}: {left:?} vs {right:?}")]
    Shape {
        op: &'static str,
        left: (usize, usize),
        right: (usize, usize),
    },

    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("invalid model config: {0}")]
    Config(String),

    #[error("cache mismatch: {0}")]
    Cache(String),

    #[error("invalid edit op #{index}: {reason}")]
    Script { index: usize, reason: String },

    #[error("edit script line {line}: {reason}")]
    ScriptParse { line: usize, reason: String },

    #[error("scenario: {0}")]
    Scenario(String),

    #[error("diagnostics: {0}")]
    Diagnostics(String),

    #[error("weight file: {0}")]
    Weights(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn arg(msg: impl Into<String>) -> Self {
        Error::Argument(msg.into())
    }
}
