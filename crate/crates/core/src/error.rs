use thiserror::Error;

/// Errors raised by the library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("coordinate {value} at index {index} lies outside [0, 1]")]
    OutOfUnitCube { index: usize, value: f64 },
    #[error("inconsistent prescription: {0}")]
    InconsistentPrescription(String),
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error("grid too large: {cells} cells exceeds cap {cap}")]
    GridTooLarge { cells: u128, cap: usize },
    #[error("invalid marginal: {0}")]
    InvalidMarginal(String),
    #[error("infeasible: {0}")]
    Infeasible(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("no convergence: last estimates {prev} and {last} at resolution {n}")]
    NoConvergence { prev: f64, last: f64, n: usize },
    #[error("dual verification failed: {0}")]
    DualVerification(String),
    #[error("market data: {0}")]
    MarketData(String),
}

pub type Result<T> = std::result::Result<T, Error>;
