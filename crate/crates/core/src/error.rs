use thiserror::Error;

use crate::timeseries::Unit;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Broad failure class, used by front ends to pick an exit status.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    /// Bad input data, models or arguments.
    Data,
    /// A numerical procedure failed (non-convergence, rank deficiency, ...).
    Numerical,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("unit mismatch: {0} vs {1}")]
    UnitMismatch(Unit, Unit),

    #[error("series are not aligned: {0}")]
    Misaligned(String),

    #[error("invalid time window: {0}")]
    Window(String),

    #[error("invalid building model: {0}")]
    InvalidModel(String),

    #[error("singular thermal network: {0}")]
    SingularNetwork(String),

    #[error("missing input: {0}")]
    MissingInput(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("collinear regressors {first} and {second} (normalized condition number {condition:.3e})")]
    Collinearity {
        first: String,
        second: String,
        condition: f64,
    },

    #[error("rank-deficient problem: {0}")]
    RankDeficient(String),

    #[error("no convergence after {0} iterations")]
    NoConvergence(usize),

    #[error("parameter is not identifiable from the data: {0}")]
    Unidentifiable(String),

    #[error("plant capacity exceeded in {hours} of {total} hours (limit {limit:.1}%)")]
    CapacityExceeded { hours: usize, total: usize, limit: f64 },

    #[error("numerical failure: {0}")]
    Numerical(String),
}

impl Error {
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::Collinearity { .. }
            | Error::RankDeficient(_)
            | Error::NoConvergence(_)
            | Error::Unidentifiable(_)
            | Error::Numerical(_)
            | Error::SingularNetwork(_) => ErrorKind::Numerical,
            _ => ErrorKind::Data,
        }
    }
}
