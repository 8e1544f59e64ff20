//! Discrete-event simulator of a multi-cloud GPU burst feeding a
//! high-throughput job pool, with per-second billing and compute accounting.
//!
//! A run is a pure function of the scenario document and the root seed: all
//! randomness comes from named counter-based streams (see [`rng`]).

// `!(x > 0.0)` style checks are deliberate: they reject NaN too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod accounting;
pub mod error;
pub mod market;
pub mod output;
pub mod pool;
pub mod provisioner;
pub mod rng;
pub mod run;
pub mod scenario;
pub mod sim;
pub mod sweep;
pub mod workload;

pub use error::{ConfigError, RunError, SimError};
pub use run::{simulate, RunOptions, RunOutput, RunSummary};
pub use scenario::Scenario;
