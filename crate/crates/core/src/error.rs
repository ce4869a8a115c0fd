use alloc::string::String;
use core::fmt;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        found: usize,
    },
    NonFinite {
        context: &'static str,
    },
    InvalidConfig {
        field: &'static str,
        reason: String,
    },
    NoConvergence {
        sweeps: usize,
    },
    NotPositiveDefinite {
        component: usize,
    },
    Diverged {
        step: usize,
    },
    ChainDiverged {
        chain: usize,
        step: usize,
    },
    NonFiniteScore {
        coordinate: usize,
    },
    ConstantInput,
    Empty {
        context: &'static str,
    },
}

impl Error {
    pub(crate) fn config(field: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidConfig {
            field,
            reason: reason.into(),
        }
    }

    pub(crate) fn dims(context: &'static str, expected: usize, found: usize) -> Self {
        Error::DimensionMismatch {
            context,
            expected,
            found,
        }
    }

    /// True for failures of the numerics rather than of the caller's input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::NoConvergence { .. }
                | Error::Diverged { .. }
                | Error::ChainDiverged { .. }
                | Error::NonFiniteScore { .. }
                | Error::NotPositiveDefinite { .. }
        )
    }
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::DimensionMismatch {
                context,
                expected,
                found,
            } => write!(f, "{context}: expected dimension {expected}, found {found}"),
            Error::NonFinite { context } => write!(f, "{context}: non-finite value"),
            Error::InvalidConfig { field, reason } => write!(f, "invalid `{field}`: {reason}"),
            Error::NoConvergence { sweeps } => {
                write!(f, "singular values did not converge after {sweeps} sweeps")
            }
            Error::NotPositiveDefinite { component } => {
                write!(f, "covariance of component {component} is not positive definite")
            }
            Error::Diverged { step } => write!(f, "training diverged at step {step}"),
            Error::ChainDiverged { chain, step } => {
                write!(f, "langevin chain {chain} diverged at step {step}")
            }
            Error::NonFiniteScore { coordinate } => {
                write!(f, "non-finite score while differentiating coordinate {coordinate}")
            }
            Error::ConstantInput => write!(f, "correlation undefined for constant input"),
            Error::Empty { context } => write!(f, "{context}: empty input"),
        }
    }
}

impl core::error::Error for Error {}
