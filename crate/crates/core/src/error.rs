use thiserror::Error;

/// Errors raised by the linear algebra, sampling and experiment layers.
#[derive(Debug, Error)]
pub enum LabError {
    #[error("invalid order {0}: must be at least 1")]
    InvalidOrder(f64),

    #[error("unsupported order {order}: {reason}")]
    UnsupportedOrder { order: f64, reason: &'static str },

    #[error("shape error: {0}")]
    Shape(String),

    #[error("dimension error: {0}")]
    Dimension(String),

    #[error("matrix is not Hermitian (max |A - A^dag| = {0:e})")]
    NotHermitian(f64),

    #[error("matrix is not positive semi-definite (eigenvalue {0:e})")]
    NotPositive(f64),

    #[error("trace {0} differs from 1")]
    NotNormalized(f64),

    #[error("non-finite entry in matrix data")]
    NonFinite,

    #[error("domain error: {0}")]
    Domain(String),

    #[error("unsupported shape: {0}")]
    UnsupportedShape(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl LabError {
    /// Whether the error stems from a failed numerical routine rather than bad input.
    pub fn is_numerical(&self) -> bool {
        matches!(self, LabError::Numerical(_))
    }
}

pub type Result<T, E = LabError> = std::result::Result<T, E>;
