use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, found {found}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("non-finite value encountered in {0}")]
    NonFinite(&'static str),

    #[error("training diverged at epoch {epoch}: loss is {loss}")]
    Diverged { epoch: usize, loss: f64 },

    #[error("dataset holds a single class ({0}); at least two are required")]
    SingleClass(usize),

    #[error("class {class} has {count} members, fewer than the {required} required")]
    InsufficientClass {
        class: usize,
        count: usize,
        required: usize,
    },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("record {record}: feature `{feature}` has no observations")]
    MissingFeature { record: String, feature: String },

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: u64,
        message: String,
    },

    #[error("malformed weight file: {0}")]
    MalformedWeights(String),

    #[error("no successful adversarial candidate")]
    NoSuccessfulCandidate,

    #[error("no correctly classified records of class {0} to attack")]
    NoEligibleRecords(usize),

    #[error("attack precondition violated: record is classified as {predicted}, not source {source_label}")]
    NotSourceClass {
        predicted: usize,
        source_label: usize,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for failures of the numerics (divergence, overflow, failed attacks)
    /// as opposed to bad inputs or configuration.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::NonFinite(_) | Error::Diverged { .. } | Error::NoSuccessfulCandidate
        )
    }
}
