use num_bigint::BigUint;
use thiserror::Error;

/// Errors raised across the library. Each variant maps onto one CLI exit code.
#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("validation failed: {0}")]
    Validation(String),

    #[error("not admissible: {0}")]
    Admissibility(String),

    #[error("range error: {0}")]
    Range(String),

    #[error("point kinds do not match: {0}")]
    KindMismatch(String),

    #[error("enumeration cap exceeded: {count} points requested, cap is {cap}")]
    Resource { count: BigUint, cap: u64 },

    #[error("empty refinement at layer {layer}: parent #{parent} (center {center}) has no children")]
    EmptyRefinement {
        layer: usize,
        parent: usize,
        center: String,
    },

    #[error("malformed construction: {0}")]
    Structure(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Process exit code: 2 validation/admissibility, 3 empty refinement, 4 resource cap.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::EmptyRefinement { .. } => 3,
            Error::Resource { .. } => 4,
            Error::Io(_) => 1,
            _ => 2,
        }
    }

    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn validation(msg: impl Into<String>) -> Self {
        Error::Validation(msg.into())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
