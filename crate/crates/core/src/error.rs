use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("invalid instance: {0}")]
    InvalidInstance(String),
    #[error("schema error: {0}")]
    Schema(String),
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("problem is infeasible: {0}")]
    Infeasible(String),
    #[error("solver failure: {0}")]
    Solver(String),
    #[error("unknown backend `{0}`")]
    UnknownBackend(String),
    #[error("price out of range: {0}")]
    PriceOutOfRange(String),
    #[error("chain violation: {0}")]
    ChainViolation(String),
}

pub type Result<T> = std::result::Result<T, Error>;
