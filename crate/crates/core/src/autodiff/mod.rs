//! Scalar reverse-mode automatic differentiation.
//!
//! Operations are recorded on a [`Tape`] through [`Var`] handles; one call to
//! [`Tape::backward`] returns the derivative of an output with respect to every
//! leaf. Pricing code is written against the [`Scalar`] trait so the same
//! routine runs on plain `f64` or on tape variables.

mod gradcheck;
mod scalar;
mod smooth;
mod tape;

pub use gradcheck::{grad_check, ScalarFn};
pub use scalar::{norm_cdf, norm_pdf, stable_sigmoid, stable_softplus, Scalar};
pub use smooth::{
    capped_payment, double_sigmoid_mask, sigmoid_k, smooth_min, softplus, step, Mode,
    SmoothingConfig,
};
pub use tape::{BinaryOp, Gradients, OpKind, Tape, UnaryOp, Var, DEFAULT_EPS};
