use thiserror::Error;

#[derive(Debug, Error)]
pub enum OtError {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("numeric instability: {0}")]
    NumericInstability(String),

    /// A recorded tape node produced NaN or infinity.
    #[error("non-finite value produced by tape node {node} ({op})")]
    NonFinite { node: usize, op: &'static str },

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

impl OtError {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        OtError::InvalidInput(msg.into())
    }

    /// True for the numeric failure classes (instability and non-finite tape values).
    pub fn is_numeric(&self) -> bool {
        matches!(
            self,
            OtError::NumericInstability(_) | OtError::NonFinite { .. }
        )
    }
}

pub type Result<T> = std::result::Result<T, OtError>;
