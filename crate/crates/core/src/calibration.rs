//! Differential-evolution calibration of the engine parameters to tranche
//! prices.
//!
//! The objective is the largest absolute price error over the participating
//! tranches. It is evaluated on the pricing context's cached draws, so it is
//! a deterministic function of the parameters.

use log::{debug, warn};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::autodiff::Mode;
use crate::engines::{EngineParams, PARAM_NAMES};
use crate::error::{Error, Result};
use crate::pricing::PricingContext;
use crate::waterfall::Tranche;

/// Objective value returned when pricing fails.
pub const PENALTY: f64 = 1e6;

/// Target prices in percent of initial notional; absent tranches do not
/// participate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct CalibrationTarget {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub senior: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mezzanine: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub junior: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lrl: Option<f64>,
}

impl CalibrationTarget {
    pub fn new(senior: f64, mezzanine: f64, junior: f64) -> Self {
        CalibrationTarget {
            senior: Some(senior),
            mezzanine: Some(mezzanine),
            junior: Some(junior),
            lrl: None,
        }
    }

    /// Targets for every tranche priced at `prices`.
    pub fn from_prices(prices: [f64; 4], which: &[Tranche]) -> Self {
        let mut t = CalibrationTarget::default();
        for &tr in which {
            *t.slot(tr) = Some(prices[tr.index()]);
        }
        t
    }

    fn slot(&mut self, t: Tranche) -> &mut Option<f64> {
        match t {
            Tranche::Senior => &mut self.senior,
            Tranche::Mezzanine => &mut self.mezzanine,
            Tranche::Junior => &mut self.junior,
            Tranche::Lrl => &mut self.lrl,
        }
    }

    pub fn get(&self, t: Tranche) -> Option<f64> {
        match t {
            Tranche::Senior => self.senior,
            Tranche::Mezzanine => self.mezzanine,
            Tranche::Junior => self.junior,
            Tranche::Lrl => self.lrl,
        }
    }

    pub fn entries(&self) -> Vec<(Tranche, f64)> {
        Tranche::ALL
            .iter()
            .filter_map(|&t| self.get(t).map(|p| (t, p)))
            .collect()
    }

    /// Every target moved by `delta` price points.
    pub fn shifted(&self, delta: f64) -> Self {
        let mut t = self.clone();
        for tr in Tranche::ALL {
            if let Some(p) = t.slot(tr) {
                *p += delta;
            }
        }
        t
    }

    pub fn validate(&self) -> Result<()> {
        let e = self.entries();
        if e.is_empty() {
            return Err(Error::Config(
                "at least one calibration target is required".into(),
            ));
        }
        for (t, p) in e {
            if !(p > 0.0 && p <= 200.0) {
                return Err(Error::Config(format!("{t} target {p} outside (0, 200]")));
            }
        }
        Ok(())
    }
}

/// Search box for the engine parameters. A parameter whose bounds coincide
/// is pinned.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamSpace {
    pub lower: EngineParams,
    pub upper: EngineParams,
}

impl Default for ParamSpace {
    fn default() -> Self {
        ParamSpace {
            lower: EngineParams {
                sigma: 0.0,
                mu: 0.0,
                p: 0.0,
                alpha: 1.5,
                rho: 0.0,
                w: 0.3,
            },
            upper: EngineParams {
                sigma: 0.6,
                mu: 0.0,
                p: 1.0,
                alpha: 10.0,
                rho: 1.0,
                w: 1.5,
            },
        }
    }
}

impl ParamSpace {
    pub fn validate(&self) -> Result<()> {
        let lo = self.lower.to_array();
        let hi = self.upper.to_array();
        for i in 0..6 {
            if !lo[i].is_finite() || !hi[i].is_finite() || lo[i] > hi[i] {
                return Err(Error::Config(format!(
                    "bounds for {} must be finite with lower <= upper",
                    PARAM_NAMES[i]
                )));
            }
        }
        // Every corner of the box must be a legal parameter set.
        self.lower.validate()?;
        self.upper.validate()
    }

    /// Pins one parameter by name.
    pub fn pin(&mut self, name: &str, value: f64) -> Result<()> {
        let i = PARAM_NAMES
            .iter()
            .position(|n| *n == name)
            .ok_or_else(|| Error::Config(format!("unknown parameter {name}")))?;
        let mut lo = self.lower.to_array();
        let mut hi = self.upper.to_array();
        lo[i] = value;
        hi[i] = value;
        self.lower = EngineParams::from_array(lo);
        self.upper = EngineParams::from_array(hi);
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DESettings {
    pub population: usize,
    /// Mutation factor `F`.
    pub mutation: f64,
    /// Binomial crossover rate.
    pub crossover: f64,
    pub max_generations: usize,
    /// Stop once the best objective is at or below this value.
    pub tolerance: f64,
    /// Stop after this many generations without improving the best value.
    pub stall_generations: usize,
    pub seed: u64,
}

impl Default for DESettings {
    fn default() -> Self {
        DESettings {
            population: 40,
            mutation: 0.7,
            crossover: 0.9,
            max_generations: 500,
            tolerance: 0.005,
            stall_generations: 100,
            seed: 42,
        }
    }
}

impl DESettings {
    pub fn validate(&self) -> Result<()> {
        if self.population < 4 {
            return Err(Error::Config("population must be at least 4".into()));
        }
        if !(self.mutation > 0.0 && self.mutation < 2.0) {
            return Err(Error::Config("mutation factor must lie in (0, 2)".into()));
        }
        if !(0.0..=1.0).contains(&self.crossover) {
            return Err(Error::Config("crossover rate must lie in [0, 1]".into()));
        }
        if !(self.tolerance >= 0.0) {
            return Err(Error::Config("tolerance must be >= 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DEResult {
    pub best: Vec<f64>,
    pub value: f64,
    pub generations: usize,
    pub evaluations: usize,
    pub converged: bool,
    /// Best objective after each generation, starting with the initial population.
    pub history: Vec<f64>,
}

fn reflect(v: f64, lo: f64, hi: f64) -> f64 {
    if lo == hi {
        return lo;
    }
    let r = if v < lo {
        lo + (lo - v)
    } else if v > hi {
        hi - (v - hi)
    } else {
        v
    };
    r.clamp(lo, hi)
}

/// Classic DE/rand/1/bin minimiser over a box.
///
/// All random choices come from one seeded stream on the calling thread and
/// trial vectors are scored in parallel, so the result does not depend on
/// the number of workers. Non-finite objective values count as `+inf`.
pub fn differential_evolution<F>(
    objective: F,
    lower: &[f64],
    upper: &[f64],
    settings: &DESettings,
) -> Result<DEResult>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    settings.validate()?;
    let dim = lower.len();
    if upper.len() != dim || dim == 0 {
        return Err(Error::Config(
            "bounds must be non-empty and of equal length".into(),
        ));
    }
    if lower
        .iter()
        .zip(upper)
        .any(|(l, h)| !l.is_finite() || !h.is_finite() || l > h)
    {
        return Err(Error::Config(
            "bounds must be finite with lower <= upper".into(),
        ));
    }
    let score = |x: &[f64]| {
        let v = objective(x);
        if v.is_nan() {
            f64::INFINITY
        } else {
            v
        }
    };
    let np = settings.population;
    let mut rng = ChaCha8Rng::seed_from_u64(settings.seed);
    let mut pop: Vec<Vec<f64>> = (0..np)
        .map(|_| {
            (0..dim)
                .map(|d| lower[d] + rng.random::<f64>() * (upper[d] - lower[d]))
                .collect()
        })
        .collect();
    let mut fit: Vec<f64> = pop.par_iter().map(|x| score(x)).collect();
    let mut evaluations = np;
    let best_of = |fit: &[f64]| {
        fit.iter().enumerate().fold(
            (0, f64::INFINITY),
            |(bi, bv), (i, &v)| if v < bv { (i, v) } else { (bi, bv) },
        )
    };
    let (mut best_i, mut best_v) = best_of(&fit);
    let mut history = vec![best_v];
    let mut generations = 0;
    let mut last_improvement = 0;

    while best_v > settings.tolerance && generations < settings.max_generations {
        generations += 1;
        let trials: Vec<Vec<f64>> = (0..np)
            .map(|i| {
                let mut pick = |exclude: &[usize]| loop {
                    let c = rng.random_range(0..np);
                    if !exclude.contains(&c) {
                        return c;
                    }
                };
                let a = pick(&[i]);
                let b = pick(&[i, a]);
                let c = pick(&[i, a, b]);
                let forced = rng.random_range(0..dim);
                (0..dim)
                    .map(|d| {
                        if d == forced || rng.random::<f64>() < settings.crossover {
                            let v = pop[a][d] + settings.mutation * (pop[b][d] - pop[c][d]);
                            reflect(v, lower[d], upper[d])
                        } else {
                            pop[i][d]
                        }
                    })
                    .collect()
            })
            .collect();
        let trial_fit: Vec<f64> = trials.par_iter().map(|x| score(x)).collect();
        evaluations += np;
        for (i, (x, f)) in trials.into_iter().zip(trial_fit).enumerate() {
            if f <= fit[i] {
                pop[i] = x;
                fit[i] = f;
            }
        }
        let (bi, bv) = best_of(&fit);
        if bv < best_v - 1e-12 {
            last_improvement = generations;
        }
        best_i = bi;
        best_v = bv;
        history.push(best_v);
        debug!("generation {generations}: best {best_v:.6}");
        if generations - last_improvement >= settings.stall_generations {
            break;
        }
    }
    Ok(DEResult {
        best: pop[best_i].clone(),
        value: best_v,
        generations,
        evaluations,
        converged: best_v <= settings.tolerance,
        history,
    })
}

/// Largest absolute price error over the participating tranches.
pub fn objective(
    params: &EngineParams,
    targets: &CalibrationTarget,
    ctx: &PricingContext,
    mode: Mode,
) -> f64 {
    match ctx.mean_prices_at(params, mode) {
        Ok(prices) => targets
            .entries()
            .iter()
            .map(|&(t, target)| (prices[t.index()] - target).abs())
            .fold(0.0, f64::max),
        Err(e) => {
            warn!("pricing failed at {params:?}: {e}");
            PENALTY
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Residual {
    pub tranche: Tranche,
    pub target: f64,
    pub model: f64,
    pub residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationReport {
    pub params: EngineParams,
    pub max_error: f64,
    pub residuals: Vec<Residual>,
    pub generations: usize,
    pub evaluations: usize,
    /// Set when the tolerance was not reached.
    pub warning: bool,
}

/// Fits the engine parameters to `targets` within `space`.
pub fn calibrate(
    ctx: &PricingContext,
    targets: &CalibrationTarget,
    space: &ParamSpace,
    settings: &DESettings,
    mode: Mode,
) -> Result<CalibrationReport> {
    targets.validate()?;
    space.validate()?;
    let lower = space.lower.to_array();
    let upper = space.upper.to_array();
    let f = |x: &[f64]| {
        let params = EngineParams::from_array([x[0], x[1], x[2], x[3], x[4], x[5]]);
        objective(&params, targets, ctx, mode)
    };
    let result = differential_evolution(f, &lower, &upper, settings)?;
    let b = &result.best;
    let params = EngineParams::from_array([b[0], b[1], b[2], b[3], b[4], b[5]]);
    let prices = ctx.mean_prices_at(&params, mode)?;
    let residuals: Vec<Residual> = targets
        .entries()
        .into_iter()
        .map(|(tranche, target)| Residual {
            tranche,
            target,
            model: prices[tranche.index()],
            residual: prices[tranche.index()] - target,
        })
        .collect();
    let max_error = residuals
        .iter()
        .map(|r| r.residual.abs())
        .fold(0.0, f64::max);
    if !result.converged {
        warn!(
            "calibration stopped after {} generations at max error {max_error:.4}",
            result.generations
        );
    }
    Ok(CalibrationReport {
        params,
        max_error,
        residuals,
        generations: result.generations,
        evaluations: result.evaluations,
        warning: !result.converged,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeResult {
    /// Shift applied to every target, in price points.
    pub shift: f64,
    pub params: EngineParams,
    /// Parameter change relative to the unperturbed calibration.
    pub displacement: [f64; 6],
    /// Largest distance between repriced tranches and the original targets.
    pub max_deviation: f64,
}

/// Recalibrates to targets moved by each of `shifts` and reports how far the
/// parameters and the repriced tranches move.
pub fn robustness_probe(
    ctx: &PricingContext,
    targets: &CalibrationTarget,
    space: &ParamSpace,
    settings: &DESettings,
    mode: Mode,
    reference: &EngineParams,
    shifts: &[f64],
) -> Result<Vec<ProbeResult>> {
    shifts
        .iter()
        .map(|&shift| {
            let report = calibrate(ctx, &targets.shifted(shift), space, settings, mode)?;
            let prices = ctx.mean_prices_at(&report.params, mode)?;
            let max_deviation = targets
                .entries()
                .iter()
                .map(|&(t, p)| (prices[t.index()] - p).abs())
                .fold(0.0, f64::max);
            let new = report.params.to_array();
            let old = reference.to_array();
            let displacement = std::array::from_fn(|i| new[i] - old[i]);
            log::info!("probe shift {shift:+}: displacement {displacement:?}, deviation {max_deviation:.4}");
            Ok(ProbeResult {
                shift,
                params: report.params,
                displacement,
                max_deviation,
            })
        })
        .collect()
}
