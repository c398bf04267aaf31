//! The [`Scalar`] abstraction lets the engines and the waterfall run either on
//! plain `f64` (fast pricing) or on tape-tracked [`Var`]s (sensitivities).

use std::fmt::Debug;
use std::ops::{Add, AddAssign, Div, Mul, Neg, Sub, SubAssign};

use libm::erfc;

use super::tape::{OpKind, Var};

const FRAC_1_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

/// Logistic function `1 / (1 + e^{-x})`, evaluated without overflow.
pub fn stable_sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `(1/beta) ln(1 + e^{beta x})`, evaluated without overflow.
pub fn stable_softplus(x: f64, beta: f64) -> f64 {
    let z = beta * x;
    (z.max(0.0) + (-z.abs()).exp().ln_1p()) / beta
}

/// Standard normal CDF.
pub fn norm_cdf(z: f64) -> f64 {
    0.5 * erfc(-z * std::f64::consts::FRAC_1_SQRT_2)
}

/// Standard normal density.
pub fn norm_pdf(z: f64) -> f64 {
    FRAC_1_SQRT_2PI * (-0.5 * z * z).exp()
}

fn guarded_denominator(b: f64, eps: f64) -> (f64, bool) {
    if b.abs() < eps {
        let sign = if b < 0.0 { -1.0 } else { 1.0 };
        (b + sign * eps, true)
    } else {
        (b, false)
    }
}

/// Arithmetic needed by the pricing pipeline.
pub trait Scalar:
    Copy
    + Debug
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Neg<Output = Self>
    + Add<f64, Output = Self>
    + Sub<f64, Output = Self>
    + Mul<f64, Output = Self>
    + Div<f64, Output = Self>
    + AddAssign
    + SubAssign
{
    fn constant(c: f64) -> Self;
    fn value(&self) -> f64;
    fn exp(self) -> Self;
    /// Natural log; inputs in `[-eps, eps)` are evaluated at `eps`.
    fn ln_guarded(self, eps: f64) -> Self;
    /// Square root whose derivative is capped at `0.5 / sqrt(eps)`.
    fn sqrt_guarded(self, eps: f64) -> Self;
    fn powf(self, c: f64) -> Self;
    /// Division with the denominator pushed away from zero by `eps`.
    fn div_guarded(self, rhs: Self, eps: f64) -> Self;
    /// `1 / (1 + e^{-k x})`.
    fn sigmoid(self, k: f64) -> Self;
    /// `(1/beta) ln(1 + e^{beta x})`.
    fn softplus(self, beta: f64) -> Self;
    fn norm_cdf(self) -> Self;
}

impl Scalar for f64 {
    #[inline]
    fn constant(c: f64) -> Self {
        c
    }
    #[inline]
    fn value(&self) -> f64 {
        *self
    }
    #[inline]
    fn exp(self) -> Self {
        f64::exp(self)
    }
    #[inline]
    fn ln_guarded(self, eps: f64) -> Self {
        if self < -eps {
            f64::NAN
        } else {
            self.max(eps).ln()
        }
    }
    #[inline]
    fn sqrt_guarded(self, _eps: f64) -> Self {
        self.max(0.0).sqrt()
    }
    #[inline]
    fn powf(self, c: f64) -> Self {
        f64::powf(self, c)
    }
    #[inline]
    fn div_guarded(self, rhs: Self, eps: f64) -> Self {
        self / guarded_denominator(rhs, eps).0
    }
    #[inline]
    fn sigmoid(self, k: f64) -> Self {
        stable_sigmoid(k * self)
    }
    #[inline]
    fn softplus(self, beta: f64) -> Self {
        stable_softplus(self, beta)
    }
    #[inline]
    fn norm_cdf(self) -> Self {
        norm_cdf(self)
    }
}

impl<'t> Scalar for Var<'t> {
    fn constant(c: f64) -> Self {
        Var::constant(c)
    }
    fn value(&self) -> f64 {
        self.value
    }
    fn exp(self) -> Self {
        let v = self.value.exp();
        self.unary(OpKind::Exp, v, v)
    }
    fn ln_guarded(self, eps: f64) -> Self {
        if self.value < -eps {
            return self.unary(OpKind::Log, f64::NAN, f64::NAN);
        }
        let x = if self.value < eps {
            self.flag_guard();
            eps
        } else {
            self.value
        };
        self.unary(OpKind::Log, x.ln(), 1.0 / x)
    }
    fn sqrt_guarded(self, eps: f64) -> Self {
        let v = self.value.max(0.0).sqrt();
        self.unary(OpKind::Sqrt, v, 0.5 / v.max(eps.sqrt()))
    }
    fn powf(self, c: f64) -> Self {
        let v = self.value.powf(c);
        self.unary(OpKind::Pow, v, c * self.value.powf(c - 1.0))
    }
    fn div_guarded(self, rhs: Self, eps: f64) -> Self {
        let (b, guarded) = guarded_denominator(rhs.value, eps);
        if guarded {
            if self.tape.is_some() {
                self.flag_guard();
            } else {
                rhs.flag_guard();
            }
        }
        let v = self.value / b;
        self.binary(rhs, OpKind::Div, v, 1.0 / b, -v / b)
    }
    fn sigmoid(self, k: f64) -> Self {
        let s = stable_sigmoid(k * self.value);
        let one_minus = stable_sigmoid(-k * self.value);
        self.unary(OpKind::Sigmoid, s, k * s * one_minus)
    }
    fn softplus(self, beta: f64) -> Self {
        let v = stable_softplus(self.value, beta);
        self.unary(OpKind::Softplus, v, stable_sigmoid(beta * self.value))
    }
    fn norm_cdf(self) -> Self {
        self.unary(OpKind::NormCdf, norm_cdf(self.value), norm_pdf(self.value))
    }
}

impl<'t> Add for Var<'t> {
    type Output = Var<'t>;
    fn add(self, rhs: Self) -> Self {
        self.binary(rhs, OpKind::Add, self.value + rhs.value, 1.0, 1.0)
    }
}

impl<'t> Sub for Var<'t> {
    type Output = Var<'t>;
    fn sub(self, rhs: Self) -> Self {
        self.binary(rhs, OpKind::Sub, self.value - rhs.value, 1.0, -1.0)
    }
}

impl<'t> Mul for Var<'t> {
    type Output = Var<'t>;
    fn mul(self, rhs: Self) -> Self {
        self.binary(
            rhs,
            OpKind::Mul,
            self.value * rhs.value,
            rhs.value,
            self.value,
        )
    }
}

impl<'t> Div for Var<'t> {
    type Output = Var<'t>;
    fn div(self, rhs: Self) -> Self {
        let eps = self
            .tape
            .or(rhs.tape)
            .map_or(super::tape::DEFAULT_EPS, |t| t.eps());
        self.div_guarded(rhs, eps)
    }
}

impl<'t> Neg for Var<'t> {
    type Output = Var<'t>;
    fn neg(self) -> Self {
        self.unary(OpKind::Neg, -self.value, -1.0)
    }
}

impl<'t> Add<f64> for Var<'t> {
    type Output = Var<'t>;
    fn add(self, rhs: f64) -> Self {
        self.unary(OpKind::Add, self.value + rhs, 1.0)
    }
}

impl<'t> Sub<f64> for Var<'t> {
    type Output = Var<'t>;
    fn sub(self, rhs: f64) -> Self {
        self.unary(OpKind::Sub, self.value - rhs, 1.0)
    }
}

impl<'t> Mul<f64> for Var<'t> {
    type Output = Var<'t>;
    fn mul(self, rhs: f64) -> Self {
        self.unary(OpKind::Mul, self.value * rhs, rhs)
    }
}

impl<'t> Div<f64> for Var<'t> {
    type Output = Var<'t>;
    fn div(self, rhs: f64) -> Self {
        self.unary(OpKind::Div, self.value / rhs, 1.0 / rhs)
    }
}

impl<'t> Add<Var<'t>> for f64 {
    type Output = Var<'t>;
    fn add(self, rhs: Var<'t>) -> Var<'t> {
        rhs + self
    }
}

impl<'t> Sub<Var<'t>> for f64 {
    type Output = Var<'t>;
    fn sub(self, rhs: Var<'t>) -> Var<'t> {
        rhs.unary(OpKind::Sub, self - rhs.value, -1.0)
    }
}

impl<'t> Mul<Var<'t>> for f64 {
    type Output = Var<'t>;
    fn mul(self, rhs: Var<'t>) -> Var<'t> {
        rhs * self
    }
}

impl<'t> AddAssign for Var<'t> {
    fn add_assign(&mut self, rhs: Self) {
        *self = *self + rhs;
    }
}

impl<'t> SubAssign for Var<'t> {
    fn sub_assign(&mut self, rhs: Self) {
        *self = *self - rhs;
    }
}
