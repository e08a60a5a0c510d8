use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    Parameter { name: &'static str, reason: String },

    #[error("requested {requested} levels but the path grid only resolves {available}")]
    Resolution { requested: u32, available: u32 },

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("space grid [{lo}, {hi}] does not cover the path range [{min}, {max}]")]
    Coverage { lo: f64, hi: f64, min: f64, max: f64 },

    #[error("point {x} lies outside the space grid [{lo}, {hi}]")]
    OutsideGrid { x: f64, lo: f64, hi: f64 },

    #[error("failed to ingest {path}: {reason}")]
    Ingestion { path: PathBuf, reason: String },

    #[error("path generation failed: {0}")]
    Generation(String),

    #[error("unknown test function `{0}`")]
    UnknownTestFunction(String),

    #[error("derivative of order {order} is not available")]
    DerivativeUnavailable { order: usize },

    #[error("test function is outside the required class: {0}")]
    OutsideClass(String),

    #[error("paths do not share a grid: {0}")]
    MismatchedGrids(String),

    #[error("function is not strictly monotone on [{lo}, {hi}]")]
    NotMonotone { lo: f64, hi: f64 },
}

impl Error {
    pub(crate) fn parameter(name: &'static str, reason: impl Into<String>) -> Self {
        Error::Parameter { name, reason: reason.into() }
    }
}

/// Rejects odd or too-small variation orders.
pub(crate) fn check_order(p: u32) -> Result<()> {
    if p < 2 || !p.is_multiple_of(2) {
        return Err(Error::parameter("p", format!("must be an even integer >= 2, got {p}")));
    }
    Ok(())
}
