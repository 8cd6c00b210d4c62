use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// A value became NaN/Inf. `iteration` is the optimizer step (1-based) when known.
    #[error("numeric error{}: {message}", iteration.map(|i| format!(" at iteration {i}")).unwrap_or_default())]
    Numeric {
        iteration: Option<usize>,
        message: String,
    },

    #[error("{0}")]
    Undefined(String),

    #[error("{0}")]
    Usage(String),

    #[error("{path}: row {row}, column {column}: {message}")]
    Parse {
        path: PathBuf,
        row: usize,
        column: usize,
        message: String,
    },

    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn numeric(iteration: Option<usize>, message: impl Into<String>) -> Self {
        Error::Numeric {
            iteration,
            message: message.into(),
        }
    }

    /// Attach an iteration index to a numeric error that lacks one.
    pub fn at_iteration(self, iter: usize) -> Self {
        match self {
            Error::Numeric {
                iteration: None,
                message,
            } => Error::Numeric {
                iteration: Some(iter),
                message,
            },
            other => other,
        }
    }
}
