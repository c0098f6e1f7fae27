use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: String, actual: String },

    #[error("no field of view found")]
    NoFieldOfView,

    #[error("degenerate class balance: {0}")]
    DegenerateClassBalance(String),

    #[error("training diverged at epoch {epoch} (loss is not finite)")]
    Diverged { epoch: usize },

    #[error("no out-of-bag samples available")]
    NoOutOfBag,

    #[error("malformed {what}: {reason}")]
    Format { what: &'static str, reason: String },

    #[error("failed to read {path}: {source}")]
    Image {
        path: PathBuf,
        #[source]
        source: ::image::ImageError,
    },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("record {id}: {source}")]
    Record {
        id: String,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub(crate) fn dims(expected: (usize, usize), actual: (usize, usize)) -> Self {
        Error::DimensionMismatch {
            expected: format!("{}x{}", expected.0, expected.1),
            actual: format!("{}x{}", actual.0, actual.1),
        }
    }

    pub(crate) fn format(what: &'static str, reason: impl Into<String>) -> Self {
        Error::Format {
            what,
            reason: reason.into(),
        }
    }

    /// True for failures of the numerical procedures themselves (as opposed
    /// to bad inputs).
    pub fn is_numeric(&self) -> bool {
        match self {
            Error::Record { source, .. } => source.is_numeric(),
            e => matches!(e, Error::Diverged { .. } | Error::NoOutOfBag | Error::DegenerateClassBalance(_)),
        }
    }

    /// Attaches the id of the dataset record being processed.
    pub fn in_record(self, id: impl Into<String>) -> Self {
        Error::Record {
            id: id.into(),
            source: Box::new(self),
        }
    }
}
