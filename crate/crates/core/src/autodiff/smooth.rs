//! Smooth surrogates for the discrete logic of a waterfall.

use serde::{Deserialize, Serialize};

use super::scalar::Scalar;
use super::tape::DEFAULT_EPS;
use crate::error::{Error, Result};

/// Sharpness and guard settings for differentiable mode.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SmoothingConfig {
    /// Sigmoid sharpness of the timing bucket mask, per grid period.
    pub k: f64,
    /// Sharpness of the smooth min used for capped payments, on the scale
    /// of the covered fraction `available / due`.
    pub beta: f64,
    /// Division and log guard.
    pub eps: f64,
    /// Sigmoid sharpness of the collection-ratio trigger.
    pub trigger_k: f64,
}

impl Default for SmoothingConfig {
    fn default() -> Self {
        SmoothingConfig {
            k: 50.0,
            beta: 500.0,
            eps: DEFAULT_EPS,
            trigger_k: 200.0,
        }
    }
}

impl SmoothingConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("k", self.k),
            ("beta", self.beta),
            ("eps", self.eps),
            ("trigger_k", self.trigger_k),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!(
                    "smoothing {name} must be positive, got {v}"
                )));
            }
        }
        Ok(())
    }
}

/// Hard logic (validation, no gradients) or smooth surrogates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Exact,
    #[default]
    Smooth,
}

impl std::str::FromStr for Mode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "exact" => Ok(Mode::Exact),
            "smooth" => Ok(Mode::Smooth),
            other => Err(Error::Config(format!("unknown mode '{other}'"))),
        }
    }
}

/// `1 / (1 + e^{-k x})`.
pub fn sigmoid_k<S: Scalar>(x: S, k: f64) -> S {
    x.sigmoid(k)
}

/// `(1/beta) ln(1 + e^{beta x})`.
pub fn softplus<S: Scalar>(x: S, beta: f64) -> S {
    x.softplus(beta)
}

/// `σ_k(τ - i) · (1 - σ_k(τ - (i+1)))`, close to one for `τ ∈ (i, i+1)`.
pub fn double_sigmoid_mask<S: Scalar>(tau: S, bucket: f64, k: f64) -> S {
    // 1 - σ(x) is evaluated as σ(-x) to keep precision in the tail
    (tau - bucket).sigmoid(k) * (S::constant(bucket + 1.0) - tau).sigmoid(k)
}

/// Sigmoid-weighted blend `a σ(β(b-a)) + b σ(β(a-b))`.
///
/// Equals `min(a, b)` exactly when `a == b` and converges to it
/// exponentially fast as `|a - b|` grows.
pub fn smooth_min<S: Scalar>(a: S, b: S, beta: f64) -> S {
    let d = b - a;
    let s = d.sigmoid(beta);
    a * s + b * (S::constant(1.0) - s)
}

const SATURATION: f64 = 36.0;

/// `min(due, available)` for non-negative amounts.
///
/// Smooth mode blends on the covered fraction `available / due`, so the
/// sharpness is scale free and a zero due always pays exactly zero.
/// Dues at or below `eps` are paid in full.
pub fn capped_payment<S: Scalar>(due: S, available: S, mode: Mode, cfg: &SmoothingConfig) -> S {
    match mode {
        Mode::Exact => {
            if available.value() < due.value() {
                available
            } else {
                due
            }
        }
        Mode::Smooth => {
            // Residual balances of redeemed classes can be a few ulps below
            // zero; dividing by them would flip the sign of the ratio.
            if due.value() <= cfg.eps {
                return due;
            }
            let ratio = available.div_guarded(due, cfg.eps);
            // Outside this band the blend weights are below e^-36.
            let reach = SATURATION / cfg.beta;
            if ratio.value() >= 1.0 + reach {
                due
            } else if ratio.value() <= 1.0 - reach {
                due * ratio
            } else {
                due * smooth_min(S::constant(1.0), ratio, cfg.beta)
            }
        }
    }
}

/// Indicator `1{x >= 0}`, replaced by `σ_k(x)` in smooth mode.
pub fn step<S: Scalar>(x: S, k: f64, mode: Mode) -> S {
    match mode {
        Mode::Exact => S::constant(if x.value() >= 0.0 { 1.0 } else { 0.0 }),
        Mode::Smooth => x.sigmoid(k),
    }
}

#[cfg(test)]
mod tests {
    use super::super::tape::Tape;
    use super::*;

    #[test]
    fn sigmoid_examples() {
        for k in [0.1, 1.0, 50.0, 1e4] {
            assert_eq!(sigmoid_k(0.0, k), 0.5);
        }
        assert!((sigmoid_k(31.0, 1.0) - 1.0).abs() < 1e-12);
        assert!((sigmoid_k(1.0, 1.0) - 0.731_058_578_630_004_9).abs() < 1e-12);
    }

    #[test]
    fn softplus_examples() {
        assert!((softplus(0.0, 1.0) - std::f64::consts::LN_2).abs() < 1e-15);
        assert!((softplus(10.0, 10.0) - 10.0).abs() < 1e-4);
        let tape = Tape::new();
        let x = tape.var(0.0);
        let g = tape.backward(softplus(x, 1.0)).unwrap();
        assert!((g.wrt(x) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn softplus_plus_sigmoid_gradient() {
        let tape = Tape::new();
        let x = tape.var(0.0);
        let f = softplus(x, 1.0) + sigmoid_k(x, 1.0);
        let g = tape.backward(f).unwrap();
        assert!((g.wrt(x) - 0.75).abs() < 1e-15);
    }

    #[test]
    fn mask_examples() {
        let i = 3.0;
        assert!((double_sigmoid_mask(i + 0.5, i, 50.0) - 1.0).abs() < 1e-9);
        assert!((double_sigmoid_mask(i, i, 1e3) - 0.5).abs() < 1e-9);
        assert!(double_sigmoid_mask(i + 2.5, i, 50.0) < 1e-20);
    }

    #[test]
    fn mask_partition_of_unity() {
        // edges at integers; tau keeps at least 10/k from each edge
        let k = 50.0;
        for tau in [0.2, 1.5, 3.77, 7.8] {
            let total: f64 = (0..10).map(|i| double_sigmoid_mask(tau, i as f64, k)).sum();
            let min_dist = tau - f64::floor(tau);
            let min_dist = min_dist.min(1.0 - min_dist);
            let bound = 2.0 * stable_tail(k * min_dist);
            assert!((total - 1.0).abs() <= bound.max(1e-15), "tau={tau}");
        }
    }

    fn stable_tail(x: f64) -> f64 {
        super::super::scalar::stable_sigmoid(-x)
    }

    #[test]
    fn smooth_min_exact_on_ties_and_zeros() {
        assert_eq!(smooth_min(2.5, 2.5, 50.0), 2.5);
        assert_eq!(smooth_min(0.0, 0.0, 50.0), 0.0);
        assert!((smooth_min(1.0, 5.0, 50.0) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn capped_payment_modes() {
        let cfg = SmoothingConfig::default();
        assert_eq!(capped_payment(0.0, 0.0, Mode::Smooth, &cfg), 0.0);
        assert_eq!(capped_payment(0.0, 7.0, Mode::Smooth, &cfg), 0.0);
        assert!(capped_payment(3.0, 0.0, Mode::Smooth, &cfg).abs() < 1e-15);
        assert!((capped_payment(3.0, 100.0, Mode::Smooth, &cfg) - 3.0).abs() < 1e-12);
        assert_eq!(capped_payment(3.0, 2.0, Mode::Exact, &cfg), 2.0);
        assert_eq!(capped_payment(3.0, 4.0, Mode::Exact, &cfg), 3.0);
    }

    #[test]
    fn invalid_smoothing_rejected() {
        let cfg = SmoothingConfig {
            k: 0.0,
            ..Default::default()
        };
        assert!(cfg.validate().is_err());
    }
}
