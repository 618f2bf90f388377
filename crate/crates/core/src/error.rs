use thiserror::Error;

use crate::specfun::SpecFunResult;

/// Errors raised by the special-function layer.
#[derive(Debug, Clone, Error, PartialEq)]
pub enum SpecFunError {
    #[error("domain error in {func}: {reason}")]
    Domain { func: &'static str, reason: String },
    #[error("{func} overflows f64 at z = {z}")]
    Overflow { func: &'static str, z: f64 },
    #[error("{func}: accuracy loss, best estimate {best:?}")]
    AccuracyLoss {
        func: &'static str,
        best: SpecFunResult,
    },
}

impl SpecFunError {
    pub(crate) fn domain(func: &'static str, reason: impl Into<String>) -> Self {
        SpecFunError::Domain {
            func,
            reason: reason.into(),
        }
    }
}

/// Top level error for everything above the special-function layer.
#[derive(Debug, Error)]
pub enum KfpError {
    #[error(transparent)]
    SpecFun(#[from] SpecFunError),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("restitution coefficient r = {r} is within {band:e} of r_c; the nontrivial root merges with -2/3")]
    DegenerateRoot { r: f64, band: f64 },
    #[error("quadrature failed to converge: {0}")]
    Quadrature(String),
    #[error("configuration error in `{field}`: {reason}")]
    Config { field: String, reason: String },
    #[error("contract violation: {0}")]
    Contract(String),
    #[error("convergence failure: {0}")]
    Convergence(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl KfpError {
    pub fn config(field: impl Into<String>, reason: impl Into<String>) -> Self {
        KfpError::Config {
            field: field.into(),
            reason: reason.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, KfpError>;
