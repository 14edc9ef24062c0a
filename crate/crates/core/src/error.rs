use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    #[error("empty input: {0}")]
    EmptyInput(&'static str),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("normalization error: {0}")]
    Normalization(String),
    #[error("degenerate variance: {0}")]
    Degenerate(String),
    #[error("outcome budget exceeded: {0} outcomes (limit {1})")]
    Budget(u64, u64),
    #[error("infeasible moment sequence: Hankel determinant H_{0} = {1} below threshold")]
    Infeasible(usize, f64),
    #[error("quadrature did not converge: {0}")]
    Quadrature(String),
    #[error("invalid genogram: {0}")]
    Genogram(String),
    #[error("config error: {0}")]
    Config(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub fn shape(msg: impl Into<String>) -> Self {
        Error::Shape(msg.into())
    }
}
