use thiserror::Error;

use crate::evaluator::EvaluatorError;
use crate::manifest::ManifestError;
use crate::prompting::TemplateError;
use crate::reporting::ReportError;
use crate::scoring::ScoreError;
use crate::selection::SelectionError;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Top-level error; each variant maps to one process exit code class.
#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),
    #[error(transparent)]
    Template(#[from] TemplateError),
    #[error(transparent)]
    Manifest(#[from] ManifestError),
    #[error(transparent)]
    Score(#[from] ScoreError),
    #[error(transparent)]
    Selection(#[from] SelectionError),
    #[error(transparent)]
    Report(#[from] ReportError),
    #[error("data error: {0}")]
    Data(String),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// Coarse classification used for exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Config,
    Data,
    Transport,
}

impl ErrorClass {
    pub fn exit_code(self) -> i32 {
        match self {
            ErrorClass::Config => 2,
            ErrorClass::Data => 3,
            ErrorClass::Transport => 4,
        }
    }
}

impl Error {
    pub fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }

    pub fn class(&self) -> ErrorClass {
        match self {
            Error::Config(_) | Error::Template(_) => ErrorClass::Config,
            Error::Selection(e) if e.is_config() => ErrorClass::Config,
            Error::Score(ScoreError::Evaluator { source, .. }) => evaluator_class(source),
            Error::Report(ReportError::Config(_)) => ErrorClass::Config,
            _ => ErrorClass::Data,
        }
    }

    pub fn exit_code(&self) -> i32 {
        self.class().exit_code()
    }
}

fn evaluator_class(e: &EvaluatorError) -> ErrorClass {
    match e {
        EvaluatorError::Transport { .. } => ErrorClass::Transport,
        EvaluatorError::Config(_) => ErrorClass::Config,
        _ => ErrorClass::Data,
    }
}
