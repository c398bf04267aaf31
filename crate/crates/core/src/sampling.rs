//! Seedable random variates: normals, one-factor equicorrelated Gaussians,
//! unit-mean Pareto interarrival times and copula-coupled exponential times.
//!
//! Every draw sequence is addressed by `(seed, stream_id)`. Streams are
//! ChaCha8 keyed by the seed with the stream id selecting an independent
//! keystream, so a path's draws never depend on which thread produced them.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use statrs::distribution::{ContinuousCDF, Normal};

use crate::autodiff::{norm_cdf, Scalar};
use crate::error::{Error, Result};

/// What a stream is used for; mixed into the stream id.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Purpose {
    Amount,
    Timing,
    SaleTime,
    SaleOffset,
    Calibration,
}

impl Purpose {
    fn tag(self) -> u64 {
        match self {
            Purpose::Amount => 0x616d_6f75,
            Purpose::Timing => 0x7469_6d65,
            Purpose::SaleTime => 0x7361_6c65,
            Purpose::SaleOffset => 0x6f66_6673,
            Purpose::Calibration => 0x6361_6c69,
        }
    }
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

/// Address of a reproducible draw sequence.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RandomStream {
    pub seed: u64,
    pub stream_id: u64,
}

impl RandomStream {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        RandomStream { seed, stream_id }
    }

    /// Stream for one Monte Carlo path and purpose.
    pub fn for_path(seed: u64, path: u64, purpose: Purpose) -> Self {
        let stream_id = splitmix64(splitmix64(path) ^ purpose.tag());
        RandomStream { seed, stream_id }
    }

    pub fn rng(&self) -> Draws {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(self.stream_id);
        Draws { rng }
    }
}

/// Generator positioned at the start of a [`RandomStream`].
pub struct Draws {
    rng: ChaCha8Rng,
}

impl Draws {
    /// Uniform on `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        self.rng.random::<f64>()
    }

    pub fn normal(&mut self) -> f64 {
        self.rng.sample(StandardNormal)
    }

    pub fn coin(&mut self) -> bool {
        self.rng.random::<bool>()
    }

    pub fn normals(&mut self, n: usize) -> Vec<f64> {
        (0..n).map(|_| self.normal()).collect()
    }
}

/// Inverse of the standard normal CDF.
pub fn norm_inv_cdf(p: f64) -> f64 {
    Normal::standard().inverse_cdf(p)
}

/// Pareto law with shape `alpha` and scale `(alpha - 1) / alpha`, hence mean one.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ParetoSpec {
    alpha: f64,
}

impl ParetoSpec {
    pub fn new(alpha: f64) -> Result<Self> {
        if !(alpha > 1.0) || !alpha.is_finite() {
            return Err(Error::InfiniteMean(alpha));
        }
        Ok(ParetoSpec { alpha })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn x_m(&self) -> f64 {
        (self.alpha - 1.0) / self.alpha
    }

    pub fn mean(&self) -> f64 {
        self.alpha * self.x_m() / (self.alpha - 1.0)
    }

    pub fn cdf(&self, x: f64) -> f64 {
        if x < self.x_m() {
            0.0
        } else {
            1.0 - (self.x_m() / x).powf(self.alpha)
        }
    }

    /// `x_m (1 - u)^{-1/alpha}` for `u ∈ [0, 1)`.
    pub fn inverse_cdf(&self, u: f64) -> f64 {
        self.x_m() * (1.0 - u).powf(-1.0 / self.alpha)
    }
}

/// Convenience wrapper around [`ParetoSpec::inverse_cdf`].
pub fn pareto_inverse_cdf(u: f64, spec: &ParetoSpec) -> f64 {
    spec.inverse_cdf(u)
}

/// Unit-mean Pareto variate driven by a standard normal through `u = Φ(z)`.
///
/// Written as `x_m exp(-ln Φ(-z) / alpha)` so it is differentiable in `alpha`
/// and in `z` with the normal draw held fixed.
pub fn pareto_from_normal<S: Scalar>(z: S, alpha: S, eps: f64) -> S {
    let x_m = S::constant(1.0) - S::constant(1.0).div_guarded(alpha, eps);
    let log_tail = (-z).norm_cdf().ln_guarded(f64::MIN_POSITIVE);
    x_m * (-log_tail.div_guarded(alpha, eps)).exp()
}

fn check_rho(rho: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&rho) {
        return Err(Error::Config(format!(
            "equicorrelation rho must lie in [0, 1], got {rho}"
        )));
    }
    Ok(())
}

/// One-factor construction `z_i = sqrt(rho) Z + sqrt(1 - rho) e_i`.
pub fn one_factor<S: Scalar>(common: f64, idio: &[f64], rho: S, eps: f64) -> Vec<S> {
    let load = rho.sqrt_guarded(eps);
    let resid = (S::constant(1.0) - rho).sqrt_guarded(eps);
    idio.iter().map(|&e| load * common + resid * e).collect()
}

/// `n` standard normals with pairwise correlation `rho`.
pub fn equicorrelated_normals(n: usize, rho: f64, stream: &RandomStream) -> Result<Vec<f64>> {
    check_rho(rho)?;
    let mut draws = stream.rng();
    let common = draws.normal();
    let idio = draws.normals(n);
    Ok(one_factor(common, &idio, rho, 0.0))
}

/// Pareto interarrival times coupled through a Gaussian copula.
pub fn correlated_pareto_interarrivals(
    n: usize,
    alpha: f64,
    rho: f64,
    stream: &RandomStream,
) -> Result<Vec<f64>> {
    let spec = ParetoSpec::new(alpha)?;
    let z = equicorrelated_normals(n, rho, stream)?;
    Ok(z.into_iter()
        .map(|z| spec.x_m() * (-(norm_cdf(-z).ln()) / alpha).exp())
        .collect())
}

/// Exponential sale times (years) coupled across all assets by a one-factor
/// Gaussian copula. Output is grouped by type, `counts[i]` assets per type.
pub fn copula_exponential_times(
    lambdas: &[f64],
    counts: &[usize],
    rho: f64,
    stream: &RandomStream,
) -> Result<Vec<f64>> {
    check_rho(rho)?;
    if lambdas.len() != counts.len() {
        return Err(Error::Config(
            "lambdas and counts must have the same length".into(),
        ));
    }
    if let Some(&bad) = lambdas.iter().find(|&&l| !(l > 0.0) || !l.is_finite()) {
        return Err(Error::Config(format!(
            "lambda_rate must be positive, got {bad}"
        )));
    }
    let total: usize = counts.iter().sum();
    let z = equicorrelated_normals(total, rho, stream)?;
    let mut out = Vec::with_capacity(total);
    let mut zi = z.into_iter();
    for (&lambda, &count) in lambdas.iter().zip(counts) {
        for z in zi.by_ref().take(count) {
            // 1 - Φ(z) = Φ(-z) keeps precision for large z
            out.push(-norm_cdf(-z).ln() / lambda);
        }
    }
    Ok(out)
}
