use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("observation shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("observation carries no precomputed state for encoder `{0}`")]
    MissingPrecomputedState(String),

    #[error("dataset `{0}` is empty")]
    EmptyDataset(String),

    #[error("action does not conform to the declared action space: {0}")]
    ActionSpace(String),

    #[error("encoder mismatch: {0}")]
    EncoderMismatch(String),

    #[error("distribution mismatch: {0}")]
    DistributionMismatch(String),

    #[error("metric {metric} is not supported for {kind} distributions")]
    UnsupportedMetric { metric: String, kind: &'static str },

    #[error("covariance is not positive semidefinite after regularization")]
    NotPositiveSemidefinite,

    #[error("no comparable context: the datasets share no state at any scale")]
    NoComparableContext,

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("no labelable pairs to evaluate")]
    NoLabeledPairs,

    #[error("{path}:{line}: {message}")]
    Parse {
        path: String,
        line: usize,
        message: String,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    /// Stable machine-readable error class, used in CLI error records.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::ShapeMismatch(_) => "shape_mismatch",
            Error::MissingPrecomputedState(_) => "missing_precomputed_state",
            Error::EmptyDataset(_) => "empty_dataset",
            Error::ActionSpace(_) => "action_space",
            Error::EncoderMismatch(_) => "encoder_mismatch",
            Error::DistributionMismatch(_) => "distribution_mismatch",
            Error::UnsupportedMetric { .. } => "unsupported_metric",
            Error::NotPositiveSemidefinite => "not_positive_semidefinite",
            Error::NoComparableContext => "no_comparable_context",
            Error::InvalidArgument(_) => "invalid_argument",
            Error::NoLabeledPairs => "no_labeled_pairs",
            Error::Parse { .. } => "parse",
            Error::Io(_) => "io",
            Error::Json(_) => "json",
            Error::Csv(_) => "csv",
        }
    }
}
