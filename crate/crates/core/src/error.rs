use thiserror::Error;

/// Errors raised by the estimation pipeline.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum DoaError {
    /// An argument violated a documented precondition.
    #[error("domain error: {0}")]
    Domain(String),
    /// An iterative numerical routine did not converge or hit a singular system.
    #[error("numerical error in {routine}: {detail}")]
    Numerical {
        routine: &'static str,
        detail: String,
    },
    /// The estimator ran but could not produce the requested number of angles.
    #[error("estimation failure: {0}")]
    EstimationFailure(String),
}

impl DoaError {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Self::Domain(msg.into())
    }

    pub(crate) fn numerical(routine: &'static str, detail: impl Into<String>) -> Self {
        Self::Numerical {
            routine,
            detail: detail.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, DoaError>;
