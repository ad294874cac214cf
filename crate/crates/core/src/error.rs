use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("validation error: {0}")]
    Validation(String),

    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("disagreement rate undefined: {0}")]
    UndefinedRate(String),

    #[error("empty vocabulary: no token reached the document-frequency threshold")]
    EmptyVocabulary,

    #[error("empty sequence: text has no in-vocabulary tokens")]
    EmptySequence,

    #[error("empty dataset: {0}")]
    EmptyDataset(String),

    #[error("training diverged at epoch {epoch} (learning rate {learning_rate}): loss is {loss}")]
    Divergence {
        epoch: usize,
        learning_rate: f64,
        loss: f64,
    },

    #[error("unsupported architecture: {0}")]
    UnsupportedArchitecture(String),

    #[error("resource limit: {0}")]
    Resource(String),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error("{context}: {source}")]
    Context {
        context: String,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn context(self, context: impl Into<String>) -> Self {
        Error::Context {
            context: context.into(),
            source: Box::new(self),
        }
    }

    /// True for errors caused by bad input data or arguments, as opposed to
    /// failures while running (I/O, divergence, resource limits).
    pub fn is_validation(&self) -> bool {
        match self {
            Error::Parse { .. }
            | Error::Validation(_)
            | Error::Argument(_)
            | Error::UndefinedRate(_)
            | Error::EmptyVocabulary
            | Error::EmptySequence
            | Error::EmptyDataset(_)
            | Error::UnsupportedArchitecture(_) => true,
            Error::Context { source, .. } => source.is_validation(),
            _ => false,
        }
    }
}
