use std::path::PathBuf;

use thiserror::Error;

use crate::model::FitTrace;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("shape mismatch in {context}: expected {expected}, found {found}")]
    Shape {
        context: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("degenerate data support: {0}")]
    DegenerateSupport(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("numerical error{}: {message}", iteration.map(|t| format!(" at iteration {t}")).unwrap_or_default())]
    Numerical {
        iteration: Option<usize>,
        message: String,
    },

    /// The centroid system could not be factorized even after jitter.
    #[error("centroid system is singular or indefinite at components {components:?}")]
    Solver { components: Vec<usize> },

    #[error("fit aborted at iteration {iteration}: {source}")]
    FitAborted {
        iteration: usize,
        #[source]
        source: Box<Error>,
        trace: Box<FitTrace>,
    },

    #[error("unsupported dimension {0} (only 2D data can be plotted)")]
    UnsupportedDimension(usize),

    #[error("{path}: line {line}: {message}")]
    Parse {
        path: PathBuf,
        line: u64,
        message: String,
    },

    #[error("malformed graph document: {0}")]
    Document(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn numerical(iteration: Option<usize>, message: impl Into<String>) -> Self {
        Error::Numerical {
            iteration,
            message: message.into(),
        }
    }
}
