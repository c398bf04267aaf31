//! Monte Carlo pricing of securitization waterfalls.
//!
//! Collections from a base-scenario schedule are perturbed in amount, timing
//! and level by three sequential engines, allocated through a priority of
//! payments, and discounted per tranche. Sensitivities to the engine
//! parameters come from a scalar reverse-mode tape.

// Negated comparisons are used on purpose so that NaN inputs are rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]
pub mod assetpool;
pub mod autodiff;
pub mod calibration;
pub mod engines;
pub mod error;
pub mod metrics;
pub mod pricing;
pub mod sampling;
pub mod waterfall;

pub use error::{Error, Result};
