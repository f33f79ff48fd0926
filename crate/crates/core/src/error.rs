use std::path::PathBuf;

/// Errors produced anywhere in the toolkit.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// Malformed input; `line` is 1-based.
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("validation error: {0}")]
    Validation(String),

    /// Broken dependency structure; `sentence` is the 1-based block ordinal.
    #[error("structure error in sentence {sentence}: {message}")]
    Structure { sentence: usize, message: String },

    /// Argument outside the mathematical domain of an operation.
    #[error("domain error: {0}")]
    Domain(String),

    #[error("undefined metric: {0}")]
    UndefinedMetric(String),

    #[error("size error: {0}")]
    Size(String),

    #[error("agent failure: {0}")]
    Agent(String),

    #[error("training diverged at step {step}: {message}")]
    Training { step: usize, message: String },

    #[error("config error: {0}")]
    Config(String),

    #[error("unresolved placeholder {{{0}}}")]
    Render(String),

    #[error("transport error: {0}")]
    Transport(String),

    #[error("protocol error: {0}")]
    Protocol(String),

    /// A numerical self-check exceeded its tolerance.
    #[error("check failed: {0}")]
    Check(String),

    #[error("checkpoint error: {0}")]
    Checkpoint(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for errors caused by bad user input (exit code 1); everything
    /// else is an internal failure (exit code 2).
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::Parse { .. }
                | Error::Validation(_)
                | Error::Structure { .. }
                | Error::Domain(_)
                | Error::UndefinedMetric(_)
                | Error::Size(_)
                | Error::Config(_)
                | Error::Render(_)
                | Error::Checkpoint(_)
                | Error::Io { .. }
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
