use std::fmt;

use serde::{Deserialize, Serialize};

/// Why an exploration stopped before its cluster was exhausted.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TruncationReason {
    Volume,
    Radius,
}

impl fmt::Display for TruncationReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TruncationReason::Volume => f.write_str("volume budget"),
            TruncationReason::Radius => f.write_str("intrinsic radius budget"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("unsupported region: {0}")]
    UnsupportedRegion(String),

    #[error("resource cap exceeded: {what} needs {needed}, cap is {cap}")]
    ResourceCap { what: String, needed: u64, cap: u64 },

    #[error("exploration stopped by {0} before the target was resolved")]
    BudgetExhausted(TruncationReason),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("insufficient signal: {0}")]
    InsufficientSignal(String),

    #[error("inconclusive: {0}")]
    Inconclusive(String),

    #[error("no overlap: {0}")]
    NoOverlap(String),
}

impl Error {
    pub(crate) fn arg(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
