//! Numerical laboratory for spatial averages of the parabolic Anderson model
//! `∂u/∂t = ½Δu + u Ẇ(x)`, `u(0, ·) = 1`, driven by time-independent Gaussian
//! noise in the white, integrable, Riesz and rough regimes.

// `!(x > 0.0)` deliberately rejects NaN; index loops mirror the formulas.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop, clippy::too_many_arguments)]

pub mod chaos;
pub mod clt;
pub mod covariance;
pub mod error;
pub mod exec;
pub mod feynman_kac;
pub mod field;
pub mod grid;
pub mod heat_kernel;
pub mod qmc;
pub mod quadrature;
pub mod runner;
pub mod seed;
pub mod stats;

pub use covariance::{CovarianceModel, Regime};
pub use error::{Error, Result};
pub use exec::Execution;
pub use grid::GridSpec;

/// Version stamped into every emitted artifact.
pub const ARTIFACT_VERSION: &str = env!("CARGO_PKG_VERSION");
