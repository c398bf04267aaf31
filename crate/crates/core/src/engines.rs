//! The three stochastic collection engines, applied in sequence to a
//! base-scenario schedule: lognormal amounts, Pareto re-timing of a moved
//! fraction, and a multiplicative haircut.

use serde::{Deserialize, Serialize};

use crate::autodiff::{double_sigmoid_mask, Mode, Scalar, SmoothingConfig};
use crate::error::{Error, Result};
use crate::sampling::{one_factor, pareto_from_normal, Purpose, RandomStream};

/// Payment grid with per-period amounts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CashFlowSchedule {
    /// Year fractions of the payment dates, strictly increasing.
    pub times: Vec<f64>,
    pub amounts: Vec<f64>,
    /// Years per grid step.
    pub period_length: f64,
}

impl CashFlowSchedule {
    pub fn new(times: Vec<f64>, amounts: Vec<f64>, period_length: f64) -> Result<Self> {
        let s = CashFlowSchedule {
            times,
            amounts,
            period_length,
        };
        s.validate()?;
        Ok(s)
    }

    /// Regular grid `t_j = (j + 1) * period_length`.
    pub fn regular(amounts: Vec<f64>, period_length: f64) -> Result<Self> {
        let times = (1..=amounts.len())
            .map(|j| j as f64 * period_length)
            .collect();
        Self::new(times, amounts, period_length)
    }

    pub fn validate(&self) -> Result<()> {
        if self.times.len() != self.amounts.len() {
            return Err(Error::GridMismatch(format!(
                "{} times vs {} amounts",
                self.times.len(),
                self.amounts.len()
            )));
        }
        if !(self.period_length > 0.0) {
            return Err(Error::Config("period_length must be positive".into()));
        }
        if self.times.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::Config(
                "schedule times must be strictly increasing".into(),
            ));
        }
        if self.amounts.iter().any(|a| !a.is_finite()) {
            return Err(Error::Config("schedule amounts must be finite".into()));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.amounts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.amounts.is_empty()
    }

    pub fn total(&self) -> f64 {
        self.amounts.iter().sum()
    }

    /// Same grid, amounts multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        CashFlowSchedule {
            times: self.times.clone(),
            amounts: self.amounts.iter().map(|a| a * factor).collect(),
            period_length: self.period_length,
        }
    }
}

pub const PARAM_NAMES: [&str; 6] = ["sigma", "mu", "p", "alpha", "rho", "w"];

/// The calibratable engine parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EngineParams<S = f64> {
    /// Annualized lognormal volatility of amounts.
    pub sigma: S,
    /// Annual drift of amounts.
    #[serde(default)]
    pub mu: S,
    /// Fraction of each flow that is re-timed.
    pub p: S,
    /// Pareto shape of the interarrival times.
    pub alpha: S,
    /// Equicorrelation of the interarrival times.
    pub rho: S,
    /// Haircut factor.
    pub w: S,
}

impl<S: Copy> EngineParams<S> {
    pub fn to_array(&self) -> [S; 6] {
        [self.sigma, self.mu, self.p, self.alpha, self.rho, self.w]
    }

    pub fn from_array(a: [S; 6]) -> Self {
        EngineParams {
            sigma: a[0],
            mu: a[1],
            p: a[2],
            alpha: a[3],
            rho: a[4],
            w: a[5],
        }
    }

    pub fn map<T: Copy>(&self, f: impl FnMut(S) -> T) -> EngineParams<T> {
        EngineParams::from_array(self.to_array().map(f))
    }
}

impl EngineParams<f64> {
    /// The calibrated point reported for the toy deal.
    pub fn toy_calibrated() -> Self {
        EngineParams {
            sigma: 0.1053,
            mu: 0.0,
            p: 0.8646,
            alpha: 4.6305,
            rho: 0.5,
            w: 0.7571,
        }
    }

    /// Parameters under which the engines leave the base schedule unchanged.
    pub fn degenerate() -> Self {
        EngineParams {
            sigma: 0.0,
            mu: 0.0,
            p: 0.0,
            alpha: 2.0,
            rho: 0.0,
            w: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.to_array().iter().any(|v| !v.is_finite()) {
            return Err(Error::Config("engine parameters must be finite".into()));
        }
        if self.sigma < 0.0 {
            return Err(Error::Config(format!(
                "sigma must be >= 0, got {}",
                self.sigma
            )));
        }
        if !(0.0..=1.0).contains(&self.p) {
            return Err(Error::Config(format!(
                "p must lie in [0, 1], got {}",
                self.p
            )));
        }
        if !(self.alpha > 1.0) {
            return Err(Error::InfiniteMean(self.alpha));
        }
        if !(0.0..=1.0).contains(&self.rho) {
            return Err(Error::Config(format!(
                "rho must lie in [0, 1], got {}",
                self.rho
            )));
        }
        if !(self.w > 0.0) {
            return Err(Error::Config(format!("w must be > 0, got {}", self.w)));
        }
        Ok(())
    }
}

/// Random inputs of one path, drawn once and reused across parameter values.
#[derive(Debug, Clone, PartialEq)]
pub struct PathDraws {
    pub amount: Vec<f64>,
    pub timing_common: f64,
    pub timing_idio: Vec<f64>,
}

impl PathDraws {
    pub fn generate(n: usize, seed: u64, path: u64) -> Self {
        let amount = RandomStream::for_path(seed, path, Purpose::Amount)
            .rng()
            .normals(n);
        let mut timing = RandomStream::for_path(seed, path, Purpose::Timing).rng();
        let timing_common = timing.normal();
        let timing_idio = timing.normals(n);
        PathDraws {
            amount,
            timing_common,
            timing_idio,
        }
    }
}

/// Lognormal amounts: `CF_i = base_i exp((mu - sigma^2/2) t_i + sigma sqrt(t_i) Z_i)`.
pub fn one_sigma<S: Scalar>(base: &CashFlowSchedule, sigma: S, mu: S, normals: &[f64]) -> Vec<S> {
    let drift = mu - sigma * sigma * 0.5;
    base.times
        .iter()
        .zip(&base.amounts)
        .zip(normals)
        .map(|((&t, &amount), &z)| {
            let shock = drift * t + sigma * (t.sqrt() * z);
            shock.exp() * amount
        })
        .collect()
}

/// Lower and upper bucket edges (in periods) of output period `j`.
///
/// Buckets are centred on the scheduled periods: arrival time `t` (in periods)
/// maps to 0-based period `j` when `t ∈ (j + 0.5, j + 1.5)`. The first bucket
/// is open below and the last open above, so all moved mass lands on the grid.
fn bucket_edges(j: usize, n: usize) -> (f64, f64) {
    let lo = if j == 0 {
        f64::NEG_INFINITY
    } else {
        j as f64 + 0.5
    };
    let hi = if j + 1 == n {
        f64::INFINITY
    } else {
        j as f64 + 1.5
    };
    (lo, hi)
}

fn bucket_weight<S: Scalar>(arrival: S, j: usize, n: usize, k: f64) -> S {
    let (lo, hi) = bucket_edges(j, n);
    match (lo.is_finite(), hi.is_finite()) {
        (true, true) => double_sigmoid_mask(arrival, lo, k),
        (false, true) => (S::constant(hi) - arrival).sigmoid(k),
        (true, false) => (arrival - lo).sigmoid(k),
        (false, false) => S::constant(1.0),
    }
}

/// Re-times a fraction `p` of every flow to Pareto-distributed arrival times.
///
/// Interarrival times are in grid periods with unit mean, so the `i`-th
/// arrival sits on the `i`-th period in expectation. The retained `1 - p`
/// stays on schedule. Smooth mode spreads each moved amount with double
/// sigmoid bucket masks; exact mode drops it into a single bucket.
#[allow(clippy::too_many_arguments)]
pub fn retime<S: Scalar>(
    input: &[S],
    p: S,
    alpha: S,
    rho: S,
    timing_common: f64,
    timing_idio: &[f64],
    cfg: &SmoothingConfig,
    mode: Mode,
) -> Vec<S> {
    let n = input.len();
    let keep = S::constant(1.0) - p;
    let mut out: Vec<S> = input.iter().map(|&cf| keep * cf).collect();
    if n == 0 {
        return out;
    }
    let z = one_factor(timing_common, &timing_idio[..n], rho, cfg.eps);
    // masks below e^-36 are dropped
    let reach = 36.0 / cfg.k;
    let mut arrival = S::constant(0.0);
    for (i, &cf) in input.iter().enumerate() {
        arrival += pareto_from_normal(z[i], alpha, cfg.eps);
        let moved = p * cf;
        let t = arrival.value();
        match mode {
            Mode::Exact => {
                let j = (t - 0.5).floor().clamp(0.0, (n - 1) as f64) as usize;
                out[j] += moved;
            }
            Mode::Smooth => {
                for (j, slot) in out.iter_mut().enumerate() {
                    let (lo, hi) = bucket_edges(j, n);
                    if t <= lo - reach || t >= hi + reach {
                        continue;
                    }
                    *slot += moved * bucket_weight(arrival, j, n, cfg.k);
                }
            }
        }
    }
    out
}

/// Haircut: every period multiplied by `w`.
pub fn spread<S: Scalar>(input: &[S], w: S) -> Vec<S> {
    input.iter().map(|&cf| cf * w).collect()
}

/// OneSigma, then re-timing, then the haircut, on one path.
pub fn compose<S: Scalar>(
    base: &CashFlowSchedule,
    params: &EngineParams<S>,
    draws: &PathDraws,
    cfg: &SmoothingConfig,
    mode: Mode,
) -> Vec<S> {
    let amounts = one_sigma(base, params.sigma, params.mu, &draws.amount);
    let timed = retime(
        &amounts,
        params.p,
        params.alpha,
        params.rho,
        draws.timing_common,
        &draws.timing_idio,
        cfg,
        mode,
    );
    spread(&timed, params.w)
}

/// Engine 1 on one path drawn from `stream`.
pub fn one_sigma_engine(
    base: &CashFlowSchedule,
    sigma: f64,
    mu: f64,
    stream: &RandomStream,
) -> Result<Vec<f64>> {
    if !(sigma >= 0.0) || !mu.is_finite() {
        return Err(Error::Config(format!("invalid sigma {sigma} / mu {mu}")));
    }
    let z = stream.rng().normals(base.len());
    Ok(one_sigma(base, sigma, mu, &z))
}

/// Engine 2 on one path drawn from `stream`.
pub fn multiple_stochastic_time(
    input: &[f64],
    p: f64,
    alpha: f64,
    rho: f64,
    cfg: &SmoothingConfig,
    mode: Mode,
    stream: &RandomStream,
) -> Result<Vec<f64>> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::Config(format!("p must lie in [0, 1], got {p}")));
    }
    if !(alpha > 1.0) {
        return Err(Error::InfiniteMean(alpha));
    }
    if !(0.0..=1.0).contains(&rho) {
        return Err(Error::Config(format!("rho must lie in [0, 1], got {rho}")));
    }
    let mut draws = stream.rng();
    let common = draws.normal();
    let idio = draws.normals(input.len());
    Ok(retime(input, p, alpha, rho, common, &idio, cfg, mode))
}

/// Engine 3.
pub fn spread_engine(input: &[f64], w: f64) -> Result<Vec<f64>> {
    if !(w > 0.0) || !w.is_finite() {
        return Err(Error::Config(format!("w must be > 0, got {w}")));
    }
    Ok(spread(input, w))
}

/// All three engines on path `path` of seed `seed`.
pub fn compose_engines(
    base: &CashFlowSchedule,
    params: &EngineParams,
    cfg: &SmoothingConfig,
    mode: Mode,
    seed: u64,
    path: u64,
) -> Result<Vec<f64>> {
    params.validate()?;
    let draws = PathDraws::generate(base.len(), seed, path);
    Ok(compose(base, params, &draws, cfg, mode))
}
