use std::io;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("matrix is not skew-symmetric (|S + S^T|_F = {asymmetry:e})")]
    NotSkew { asymmetry: f64 },

    #[error("vector is not unit length (norm = {norm})")]
    NotUnit { norm: f64 },

    #[error("matrix is not a rotation (orthogonality defect {defect:e}, det {det})")]
    NotRotation { defect: f64, det: f64 },

    #[error("axis index must be 1, 2 or 3, got {0}")]
    InvalidAxis(usize),

    #[error("invalid parameter `{field}`: {reason}")]
    InvalidParameter { field: String, reason: String },

    #[error("Newton solve did not converge after {iterations} iterations (residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },

    #[error("bandlimit {bandlimit} needs at least {} beta nodes, grid has {n_beta}", 2 * bandlimit + 1)]
    BandlimitTooHighForGrid { bandlimit: usize, n_beta: usize },

    #[error("velocity box too small: Gaussian mass outside the box is {outside_mass:e}")]
    BoxTooSmall { outside_mass: f64 },

    #[error("point lies outside the velocity support box")]
    OutOfSupport,

    #[error("degenerate Bayes update: evidence {evidence:e} is below 1e-300")]
    DegenerateUpdate { evidence: f64 },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("malformed input: {0}")]
    Format(String),

    #[error("config error at `{field}`: {message}")]
    Config { field: String, message: String },

    #[error(transparent)]
    Io(#[from] io::Error),
}

impl Error {
    pub(crate) fn param(field: &str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            field: field.to_string(),
            reason: reason.into(),
        }
    }

    /// Short machine-readable name of the error variant.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::NotSkew { .. } => "NotSkew",
            Error::NotUnit { .. } => "NotUnit",
            Error::NotRotation { .. } => "NotRotation",
            Error::InvalidAxis(_) => "InvalidAxis",
            Error::InvalidParameter { .. } => "InvalidParameter",
            Error::NoConvergence { .. } => "NoConvergence",
            Error::BandlimitTooHighForGrid { .. } => "BandlimitTooHighForGrid",
            Error::BoxTooSmall { .. } => "BoxTooSmall",
            Error::OutOfSupport => "OutOfSupport",
            Error::DegenerateUpdate { .. } => "DegenerateUpdate",
            Error::ShapeMismatch(_) => "ShapeMismatch",
            Error::Format(_) => "Format",
            Error::Config { .. } => "Config",
            Error::Io(_) => "Io",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
