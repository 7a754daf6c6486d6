//! Failure classes and the process exit codes they map to.

use std::fmt;

/// Why a command failed; each class has a fixed exit code.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ExitKind {
    /// Bad command line.
    Usage,
    /// Inputs that parse but do not validate: config, script, corpus, weights.
    Validation,
    /// Everything else that goes wrong while running.
    Runtime,
}

impl ExitKind {
    pub fn code(self) -> i32 {
        match self {
            ExitKind::Usage => 1,
            ExitKind::Validation => 2,
            ExitKind::Runtime => 3,
        }
    }
}

#[derive(Debug)]
pub struct CliError {
    pub kind: ExitKind,
    pub source: anyhow::Error,
}

impl CliError {
    pub fn new(kind: ExitKind, source: impl Into<anyhow::Error>) -> Self {
        Self {
            kind,
            source: source.into(),
        }
    }

    pub fn usage(msg: impl fmt::Display) -> Self {
        Self::new(ExitKind::Usage, anyhow::anyhow!("{msg}"))
    }

    pub fn validation(msg: impl fmt::Display) -> Self {
        Self::new(ExitKind::Validation, anyhow::anyhow!("{msg}"))
    }

    /// Same class, with `context` prepended to the message.
    pub fn context(self, context: impl fmt::Display) -> Self {
        Self::new(self.kind, self.source.context(context.to_string()))
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:#}", self.source)
    }
}

impl std::error::Error for CliError {}

impl From<pie_core::Error> for CliError {
    fn from(e: pie_core::Error) -> Self {
        use pie_core::Error as E;
        let kind = match e {
            E::Shape { .. } | E::Cache(_) | E::Diagnostics(_) | E::Io(_) => ExitKind::Runtime,
            E::Argument(_)
            | E::Config(_)
            | E::Script { .. }
            | E::ScriptParse { .. }
            | E::Scenario(_)
            | E::Weights(_)
            | E::Json(_) => ExitKind::Validation,
        };
        Self::new(kind, e)
    }
}

pub type CliResult<T> = Result<T, CliError>;

/// Attaches a failure class and a context message to any error.
pub trait Classify<T> {
    fn classify(self, kind: ExitKind, context: impl fmt::Display) -> CliResult<T>;
}

impl<T, E: Into<anyhow::Error>> Classify<T> for Result<T, E> {
    fn classify(self, kind: ExitKind, context: impl fmt::Display) -> CliResult<T> {
        self.map_err(|e| CliError::new(kind, e.into().context(context.to_string())))
    }
}
