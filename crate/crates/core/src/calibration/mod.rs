//! Calibration procedures: fits of the climate, cost, damage and growth
//! parameters to (synthetic or external) data, and cap-pathway construction.

pub mod abatement;
pub mod caps;
pub mod dataset;
pub mod fixture;
pub mod growth;
pub mod intensity;
pub mod kahn;
pub mod lsq;
pub mod pipeline;
pub mod tcre;
pub mod tfp_damage;
pub mod tfp_extend;

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum CalibError {
    #[error("degenerate data: {0}")]
    DegenerateData(String),
    #[error("nonpositive GDP at index {index}")]
    ZeroGdp { index: usize },
    #[error("no interior emission control rates to fit")]
    NoInteriorPoints,
    #[error("inner growth model did not converge: {0}")]
    NonConvergence(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("{path}: {reason}")]
    Io { path: String, reason: String },
    #[error("{file}: {reason}")]
    Schema { file: String, reason: String },
    #[error(transparent)]
    Lsq(#[from] lsq::LsqError),
}
