//! Photon propagation through layered, tilted, anisotropic ice until
//! absorption, detection on a spherical optical module, or escape.
//!
//! Runs standalone as a batch Monte Carlo or as a workload model for the
//! burst simulator.

// `!(x > 0.0)` style checks are deliberate: they reject NaN too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod batch;
pub mod ice;
pub mod kernel;
pub mod vec3;

use thiserror::Error;

pub use batch::{run_batch, BatchConfig, BatchResult, Geometry, Source};
pub use ice::{Anisotropy, IceModel, Layer, Tilt};
pub use kernel::{
    intersect_dom, propagate, sample_abs_tau, sample_scatter, step_to_next_scatter, Dom, Photon,
    Status,
};
pub use vec3::Vec3;

#[derive(Debug, Error)]
pub enum PhotonError {
    #[error("Henyey-Greenstein parameter must satisfy |g| < 1, got {0}")]
    InvalidG(f64),
    #[error("invalid ice model: {0}")]
    InvalidIce(String),
    #[error("invalid detector geometry: {0}")]
    InvalidGeometry(String),
    #[error("invalid batch: {0}")]
    InvalidBatch(String),
    #[error("batch config parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("numerical fault after {steps} steps: {dump}")]
    NumericalFault { steps: u64, dump: String },
}

impl PhotonError {
    /// Exit code class: configuration problems vs runtime faults.
    pub fn is_config(&self) -> bool {
        !matches!(self, PhotonError::NumericalFault { .. })
    }
}
