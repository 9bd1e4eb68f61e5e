use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// A function was evaluated outside its domain (e.g. KL with `z + b <= 0`).
    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("failed to converge: {0}")]
    Convergence(String),

    #[error("unsupported generator/fidelity pairing: {0}")]
    UnsupportedPairing(String),

    #[error("combinatorial limit exceeded: {0}")]
    CombinatorialLimit(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(err: std::io::Error) -> Self {
        Error::Io(err.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(err: serde_json::Error) -> Self {
        Error::Parse(err.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(err: csv::Error) -> Self {
        Error::Io(err.to_string())
    }
}
