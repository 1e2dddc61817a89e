use thiserror::Error;

/// Errors produced by the simulation library.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// A parameter is out of its admissible range.
    #[error("configuration error: {0}")]
    Config(String),
    /// An input violates an operation's precondition (e.g. a non-normalized state).
    #[error("precondition violated: {0}")]
    Precondition(String),
    /// Input data is malformed (probabilities outside [0,1], dimension mismatch, ...).
    #[error("data error: {0}")]
    Data(String),
    /// Not enough data to form an estimate.
    #[error("estimation error: {0}")]
    Estimation(String),
    /// A numerical routine failed.
    #[error("numerical error: {0}")]
    Numerical(String),
}

pub type Result<T> = std::result::Result<T, Error>;
