//! Simulation, RSRP-based channel autocorrelation estimation and discrete
//! reflection design for IRS-aided wideband OFDM links.

// `!(x > 0.0)` is used on purpose so that NaN is rejected too
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod channel;
pub mod config;
pub mod error;
pub mod estimator;
pub mod harness;
pub mod linalg;
pub mod measurement;
pub mod optimizer;
pub mod reflection;
pub mod rng;

pub use config::SystemConfig;
pub use error::{Error, Result};
