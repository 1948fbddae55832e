use thiserror::Error;

use crate::linsolve::SolveStats;

#[derive(Error, Debug, Clone)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("point {x} outside domain [{a}, {b}]")]
    OutOfDomain { x: f64, a: f64, b: f64 },
    #[error("configuration error: {0}")]
    Config(String),
    #[error("solver did not converge after {} iterations (relative residual {:.3e})", .0.iterations, .0.final_residual)]
    NotConverged(SolveStats),
    #[error("solver breakdown after {} iterations (relative residual {:.3e})", .0.iterations, .0.final_residual)]
    Breakdown(SolveStats),
    #[error("cyclotron resonance at {0:?}")]
    CyclotronResonance([f64; 3]),
    #[error("dimension {dim} exceeds cap {cap}")]
    TooLarge { dim: usize, cap: usize },
    #[error("direct solver failed: {0}")]
    Direct(String),
    #[error("io error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Config(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
