//! Grid-forming converter simulation: reference frames, an LCL plant with a
//! switchable Thevenin grid, the SPC controller, fault-mode logic and a
//! fixed-step scenario harness.

pub mod blocks;
pub mod faultmode;
pub mod framework;
pub mod harness;
pub mod plant;
pub mod spc;

pub use framework::{AlphaBeta, Dq, PerUnitBase, ThreePhase};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid value for `{field}`: {reason}")]
    InvalidConfig { field: String, reason: String },
    #[error("parse error: {0}")]
    Parse(String),
    #[error("simulation diverged at t = {t:.6} s: {reason}")]
    Diverged { t: f64, reason: String },
}

impl Error {
    pub fn invalid(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::InvalidConfig { field: field.into(), reason: reason.into() }
    }

    pub fn is_divergence(&self) -> bool {
        matches!(self, Error::Diverged { .. })
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
