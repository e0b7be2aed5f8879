use thiserror::Error;

pub type Result<T> = std::result::Result<T, MoaError>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MoaError {
    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("step {step} does not follow last stored step {last}")]
    Ordering { step: u64, last: u64 },

    #[error("index {index} out of range for length {len}")]
    Index { index: usize, len: usize },

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("brute-force search refused for G = {0} (limit {limit})", limit = crate::conflict::BRUTE_FORCE_LIMIT)]
    TooLarge(usize),

    #[error("environment kind {found} not supported here (expected {expected})")]
    WrongEnvKind {
        expected: &'static str,
        found: &'static str,
    },
}

impl MoaError {
    pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        MoaError::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }
}
