use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("cluster index {r} out of range: model has {clusters} distinct eigenvalues")]
    ClusterOutOfRange { r: usize, clusters: usize },

    #[error("spectral gap undefined: model has a single distinct eigenvalue")]
    SingleCluster,

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: String, found: String },

    #[error(
        "empirical covariance not invertible: smallest eigenvalue {lambda_min:e} \
         is below {threshold:e} (n >= p is required in practice)"
    )]
    NotInvertible { lambda_min: f64, threshold: f64 },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("precondition failed: {0}")]
    Precondition(String),

    #[error("empty input")]
    EmptyInput,

    #[error("model is not serializable: {0}")]
    NotSerializable(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True for errors caused by the caller's inputs rather than by the
    /// environment. The CLI maps these to exit status 2.
    pub fn is_precondition(&self) -> bool {
        !matches!(self, Error::Io(_) | Error::Json(_))
    }

    pub(crate) fn dims(expected: impl ToString, found: impl ToString) -> Self {
        Error::DimensionMismatch {
            expected: expected.to_string(),
            found: found.to_string(),
        }
    }
}
