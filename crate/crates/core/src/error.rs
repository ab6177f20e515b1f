use thiserror::Error;

/// Errors raised by the estimation, inference, simulation and I/O layers.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    /// A precondition of an operation was violated by the caller.
    #[error("contract violation: {0}")]
    Contract(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("outcome {outcome} is degenerate (all labels equal)")]
    DegenerateOutcome { outcome: usize },

    #[error("non-finite objective encountered during optimization")]
    NonFinite,

    #[error("rank correlation undefined: {0}")]
    UndefinedCorrelation(&'static str),

    #[error("all curvature weights are below 1e-12: the decision rule is saturated")]
    SaturatedRule,

    #[error("invalid data at row {row}, column `{column}`: {message}")]
    Data {
        row: usize,
        column: String,
        message: String,
    },

    #[error("I/O error on `{path}`: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }
}
