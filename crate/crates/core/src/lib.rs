//! Minimum density power divergence estimation and robust Wald-type tests.
//!
//! The crate fits parametric models by minimising the density power
//! divergence, builds simple and composite Wald-type statistics from the
//! resulting sandwich covariance, and computes the robustness diagnostics
//! that go with them: influence functions of the estimator and of the test
//! statistics, power influence, and chi-square inflation under point-mass
//! contamination.

pub mod dpd;
pub mod error;
pub mod mdpde;
pub mod models;
pub mod numerics;
pub mod par;
pub mod robustness;
pub mod simulate;
pub mod wald;

pub use error::{Error, Result};
