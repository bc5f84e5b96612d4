use thiserror::Error;

pub type Result<T> = std::result::Result<T, SppcError>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SppcError {
    /// Input rejected before any numerical work.
    #[error("invalid {field}: {reason}")]
    Invalid { field: String, reason: String },

    #[error("stock volatility block is singular at t = {time} (condition number {condition:.3e})")]
    SingularStockVolatility { time: f64, condition: f64 },

    #[error("covariance matrix is not positive semidefinite (smallest eigenvalue {min_eigenvalue:.3e})")]
    NotPositiveSemidefinite { min_eigenvalue: f64 },

    #[error("time {time} is not a point of the simulation grid")]
    OffGrid { time: f64 },

    #[error("unsupported configuration: {0}")]
    Unsupported(String),

    #[error("configuration parse error: {0}")]
    Parse(String),
}

impl SppcError {
    pub fn invalid(field: impl Into<String>, reason: impl Into<String>) -> Self {
        SppcError::Invalid { field: field.into(), reason: reason.into() }
    }

    /// True for errors caused by the inputs rather than by a numerical breakdown.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            SppcError::Invalid { .. } | SppcError::OffGrid { .. } | SppcError::Unsupported(_) | SppcError::Parse(_)
        )
    }
}

pub(crate) fn ensure(cond: bool, field: &str, reason: impl FnOnce() -> String) -> Result<()> {
    if cond {
        Ok(())
    } else {
        Err(SppcError::invalid(field, reason()))
    }
}
