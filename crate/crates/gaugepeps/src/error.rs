use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid size: {0}")]
    InvalidSize(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("singular parametrization: 1 - M conj(M) is not invertible")]
    SingularParametrization,
    #[error("inconsistent state: {0}")]
    InconsistentState(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("degenerate contraction: the contracted overlap vanishes")]
    DegenerateContraction,
    #[error("zero amplitude for the requested configuration")]
    ZeroAmplitude,
    #[error("did not converge: {0}")]
    NoConvergence(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("serialization: {0}")]
    Serde(#[from] serde_json::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
