use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Input outside the domain of an operation or type (bad component, index,
    /// length mismatch, non-finite value, ...).
    #[error("domain error: {0}")]
    Domain(String),

    /// A lattice operation applied outside its admissible domain.
    #[error("{op} is not defined for {seq} at {at}")]
    OperationDomain { op: &'static str, seq: String, at: String },

    #[error("recency is undefined for the all-zero sequence")]
    UndefinedRecency,

    /// Index space, edge budget or memory budget exceeded.
    #[error("capacity exceeded: {0}")]
    Capacity(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn capacity(msg: impl Into<String>) -> Self {
        Error::Capacity(msg.into())
    }
}
