use thiserror::Error;

/// Errors produced by the model, inference, evaluation and I/O layers.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("degenerate parameter: {0}")]
    DegenerateParameter(String),

    #[error("no candidate question before t={t}")]
    NoCandidate { t: f64 },

    /// An observed event received zero intensity or zero mark probability.
    #[error("zero likelihood at event {event}: {reason}")]
    ZeroLikelihood { event: usize, reason: String },

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("no further event expected: forward intensity is zero")]
    NoEventExpected,

    #[error("internal invariant violated: {0}")]
    InternalInvariant(String),

    #[error("invalid dataset: {0}")]
    InvalidDataset(String),

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("{path}: {message}")]
    Schema { path: String, message: String },

    #[error("unsupported format version {found} (expected {expected})")]
    UnsupportedVersion { found: u64, expected: u64 },

    #[error("non-finite lower bound at iteration {iteration}")]
    NonFiniteBound { iteration: usize },

    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("{path}: {source}")]
    File { path: String, source: std::io::Error },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Short machine-readable tag, used for structured error output.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidArgument(_) => "invalid_argument",
            Error::DegenerateParameter(_) => "degenerate_parameter",
            Error::NoCandidate { .. } => "no_candidate",
            Error::ZeroLikelihood { .. } => "zero_likelihood",
            Error::InsufficientData(_) => "insufficient_data",
            Error::NoEventExpected => "no_event_expected",
            Error::InternalInvariant(_) => "internal_invariant",
            Error::InvalidDataset(_) => "invalid_dataset",
            Error::Parse { .. } => "parse",
            Error::Schema { .. } => "schema",
            Error::UnsupportedVersion { .. } => "unsupported_version",
            Error::NonFiniteBound { .. } => "non_finite_bound",
            Error::Io(_) | Error::File { .. } => "io",
            Error::Json(_) => "json",
            Error::Csv(_) => "csv",
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn ensure_finite(name: &str, value: f64) -> Result<()> {
    if value.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("{name} must be finite, got {value}")))
    }
}
