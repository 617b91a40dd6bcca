use std::path::PathBuf;

use thiserror::Error;

use crate::autodiff::TensorError;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{context}: {message}")]
    Format { context: String, message: String },
    #[error("invalid configuration: {field}: {message}")]
    Config { field: String, message: String },
    #[error("unknown labels: {}", .0.join(", "))]
    UnknownLabels(Vec<String>),
    #[error("unknown item: {0}")]
    UnknownItem(String),
    #[error("empty corpus")]
    EmptyCorpus,
    #[error("duplicate document id: {0}")]
    DuplicateId(String),
    #[error("{layer}: expected dimension {expected}, found {found}")]
    Dimension {
        layer: String,
        expected: usize,
        found: usize,
    },
    #[error("zero-norm row for item {0}")]
    ZeroRow(String),
    #[error("non-finite gradient in parameter {0}")]
    NonFiniteGradient(String),
    #[error("training diverged at epoch {epoch}: loss is {loss}{}", last_good.as_ref().map(|p| format!("; last good checkpoint: {}", p.display())).unwrap_or_default())]
    Divergence {
        epoch: usize,
        loss: f64,
        last_good: Option<PathBuf>,
    },
    #[error("checkpoint does not match: {0}")]
    Mismatch(String),
    #[error("metric undefined: {0}")]
    Undefined(String),
}

impl Error {
    pub fn config(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            field: field.into(),
            message: message.into(),
        }
    }

    pub fn format(context: impl Into<String>, message: impl ToString) -> Self {
        Error::Format {
            context: context.into(),
            message: message.to_string(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
