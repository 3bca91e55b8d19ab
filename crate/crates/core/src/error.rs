use std::fmt;

use thiserror::Error;

/// A single problem found while validating a system description.
#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    HorizonZero,
    NegativeInitialVariance(f64),
    HurstOutOfRange { which: &'static str, value: f64 },
    LengthMismatch { field: &'static str, expected: usize, found: usize },
    NonFinite { field: &'static str },
    NegativeWeight { index: usize, value: f64 },
    NoPositiveWeight,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::HorizonZero => write!(f, "horizon must be at least 1"),
            Violation::NegativeInitialVariance(v) => {
                write!(f, "initial variance negative (x0_var = {v})")
            }
            Violation::HurstOutOfRange { which, value } => {
                write!(f, "{which}: Hurst must lie in [1/2, 1), got {value}")
            }
            Violation::LengthMismatch { field, expected, found } => {
                write!(f, "{field}: expected length {expected}, found {found}")
            }
            Violation::NonFinite { field } => write!(f, "{field}: values must be finite"),
            Violation::NegativeWeight { index, value } => {
                write!(f, "weights[{index}] = {value} is negative")
            }
            Violation::NoPositiveWeight => {
                write!(f, "weights: at least one entry with index >= 1 must be positive")
            }
        }
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("Hurst must lie in [1/2, 1), got {0}")]
    InvalidHurst(f64),

    #[error("{}", join_violations(.0))]
    Invalid(Vec<Violation>),

    #[error("{what}: expected length {expected}, found {found}")]
    LengthMismatch { what: &'static str, expected: usize, found: usize },

    #[error("index out of range: {0}")]
    IndexOutOfRange(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("covariance factorization failed at pivot {index} (value {pivot:e})")]
    NotPositiveSemidefinite { index: usize, pivot: f64 },

    #[error("no real root in [{lo}, {hi}]")]
    NoRealRoot { lo: f64, hi: f64 },

    /// No optimizer start reached the gradient tolerance. Carries the best-effort
    /// aggregate so callers can still report it.
    #[error("no start converged (best residual {:e})", .0.residual)]
    NotConverged(Box<crate::optimizer::OptimizationResult>),
}

fn join_violations(v: &[Violation]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join("; ")
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_len(what: &'static str, expected: usize, found: usize) -> Result<()> {
    if expected != found {
        return Err(Error::LengthMismatch { what, expected, found });
    }
    Ok(())
}
