use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("coordinate {index} = {value} lies outside its domain [{lower}, {upper}]")]
    OutOfDomain {
        index: usize,
        value: f64,
        lower: f64,
        upper: f64,
    },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("non-finite objective value {0}")]
    NonFinite(f64),

    #[error("operation requires a nonempty stack")]
    EmptyStack,

    #[error("unknown benchmark function `{0}`")]
    UnknownBenchmark(String),

    #[error("external objective: {0}")]
    Worker(String),

    #[error("table format: {0}")]
    Table(String),

    #[error("internal logic error: {0}")]
    Internal(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        reason: reason.into(),
    }
}
