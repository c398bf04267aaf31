//! Monte Carlo valuation of the tranches.
//!
//! Each path runs the engines, the waterfall and the discounting; prices are
//! mean present values in percent of initial notional. Paths are evaluated in
//! parallel and reduced in path order, so results do not depend on the number
//! of worker threads.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Mode, Scalar, SmoothingConfig, Tape};
use crate::engines::{compose, CashFlowSchedule, EngineParams, PathDraws};
use crate::error::{Error, Result};
use crate::waterfall::{run_waterfall, Deal, Tranche, TrancheCashFlows};

/// Annually compounded zero curve, linear in the zero rate between pillars
/// and flat outside them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiscountCurve {
    pub pillars: Vec<f64>,
    pub zero_rates: Vec<f64>,
}

impl DiscountCurve {
    pub fn flat(rate: f64) -> Self {
        DiscountCurve {
            pillars: vec![0.0],
            zero_rates: vec![rate],
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.pillars.is_empty() || self.pillars.len() != self.zero_rates.len() {
            return Err(Error::Config(
                "curve needs matching, non-empty pillars and zero_rates".into(),
            ));
        }
        if self.pillars.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::Config(
                "curve pillars must be strictly increasing".into(),
            ));
        }
        if self
            .zero_rates
            .iter()
            .any(|r| !(*r > -1.0) || !r.is_finite())
        {
            return Err(Error::Config(
                "zero rates must be finite and > -100%".into(),
            ));
        }
        Ok(())
    }

    pub fn zero_rate(&self, t: f64) -> f64 {
        let p = &self.pillars;
        let r = &self.zero_rates;
        if t <= p[0] {
            return r[0];
        }
        if t >= p[p.len() - 1] {
            return r[r.len() - 1];
        }
        let i = p.partition_point(|&x| x <= t);
        let w = (t - p[i - 1]) / (p[i] - p[i - 1]);
        r[i - 1] + w * (r[i] - r[i - 1])
    }

    /// `D(0, t) = (1 + r_t)^{-t}`.
    pub fn discount(&self, t: f64) -> f64 {
        (1.0 + self.zero_rate(t)).powf(-t)
    }

    /// `D(t, t_i) = D(0, t_i) / D(0, t)`.
    pub fn discount_between(&self, t: f64, ti: f64) -> f64 {
        self.discount(ti) / self.discount(t)
    }

    /// Simple forward rate over `(t0, t1]`.
    pub fn forward(&self, t0: f64, t1: f64) -> f64 {
        (self.discount(t0) / self.discount(t1) - 1.0) / (t1 - t0)
    }

    /// Parallel shift of every zero rate.
    pub fn shifted(&self, bp: f64) -> Self {
        DiscountCurve {
            pillars: self.pillars.clone(),
            zero_rates: self.zero_rates.iter().map(|r| r + bp * 1e-4).collect(),
        }
    }
}

/// Where the floating coupons' index fixings come from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum IndexSource {
    /// Simple forwards of the discount curve over each accrual period.
    #[default]
    Curve,
    Flat(f64),
    Fixings(Vec<f64>),
}

impl IndexSource {
    /// The same source with every fixing moved by `bp` basis points. Curve
    /// fixings move with the curve they are read from.
    pub fn shifted(&self, bp: f64) -> Self {
        match self {
            IndexSource::Curve => IndexSource::Curve,
            IndexSource::Flat(r) => IndexSource::Flat(r + bp * 1e-4),
            IndexSource::Fixings(f) => {
                IndexSource::Fixings(f.iter().map(|r| r + bp * 1e-4).collect())
            }
        }
    }

    pub fn fixings(&self, curve: &DiscountCurve, times: &[f64], accrual: f64) -> Result<Vec<f64>> {
        match self {
            IndexSource::Curve => Ok(times
                .iter()
                .map(|&t| curve.forward((t - accrual).max(0.0), t))
                .collect()),
            IndexSource::Flat(r) => Ok(vec![*r; times.len()]),
            IndexSource::Fixings(f) => {
                if f.len() != times.len() {
                    return Err(Error::GridMismatch(format!(
                        "{} index fixings for {} periods",
                        f.len(),
                        times.len()
                    )));
                }
                Ok(f.clone())
            }
        }
    }
}

/// Which rates a DV01 bump moves.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum RateBump {
    /// The index projection that sets floating coupons; discounting is held.
    #[default]
    Index,
    /// Discount factors only; coupons are held.
    Discount,
    /// Both together.
    Both,
}

/// A market perturbation priced on common random numbers.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bump {
    pub discount_bp: f64,
    pub index_bp: f64,
    /// Factor applied to every base-scenario collection.
    pub scale: f64,
}

impl Bump {
    pub const NONE: Bump = Bump {
        discount_bp: 0.0,
        index_bp: 0.0,
        scale: 1.0,
    };

    pub fn rates(convention: RateBump, bp: f64) -> Self {
        let (d, i) = match convention {
            RateBump::Index => (0.0, bp),
            RateBump::Discount => (bp, 0.0),
            RateBump::Both => (bp, bp),
        };
        Bump {
            discount_bp: d,
            index_bp: i,
            scale: 1.0,
        }
    }
}

/// `Σ flows_i D(0, t_i)`.
pub fn pv(flows: &[f64], times: &[f64], curve: &DiscountCurve) -> f64 {
    flows
        .iter()
        .zip(times)
        .map(|(&cf, &t)| cf * curve.discount(t))
        .sum()
}

fn discounted<S: Scalar>(flows: &[S], dfs: &[f64]) -> S {
    let mut acc = S::constant(0.0);
    for (&cf, &d) in flows.iter().zip(dfs) {
        acc += cf * d;
    }
    acc
}

/// Parameter gradients of a price, on the 100-price scale.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParamGradients {
    pub sigma: f64,
    pub mu: f64,
    pub p: f64,
    pub alpha: f64,
    pub rho: f64,
    pub w: f64,
}

impl ParamGradients {
    fn from_array(a: [f64; 6]) -> Self {
        ParamGradients {
            sigma: a[0],
            mu: a[1],
            p: a[2],
            alpha: a[3],
            rho: a[4],
            w: a[5],
        }
    }

    pub fn to_array(&self) -> [f64; 6] {
        [self.sigma, self.mu, self.p, self.alpha, self.rho, self.w]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrancheReport {
    pub tranche: Tranche,
    pub notional: f64,
    /// Mean price in percent of initial notional.
    pub price: f64,
    pub std_error: f64,
    #[serde(skip)]
    pub samples: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gradients: Option<ParamGradients>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dv01: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bv01: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriceReport {
    pub n_paths: usize,
    pub seed: u64,
    pub mode: Mode,
    pub tranches: Vec<TrancheReport>,
}

impl PriceReport {
    pub fn tranche(&self, t: Tranche) -> &TrancheReport {
        &self.tranches[t.index()]
    }

    pub fn prices(&self) -> [f64; 4] {
        Tranche::ALL.map(|t| self.tranche(t).price)
    }
}

fn mean_and_se(samples: &[f64]) -> (f64, f64) {
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    if samples.len() < 2 {
        return (mean, 0.0);
    }
    let var = samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Everything needed to price the deal, with the random draws of every path
/// generated once so that repeated evaluations share them.
#[derive(Debug, Clone)]
pub struct PricingContext {
    pub deal: Deal,
    pub base: CashFlowSchedule,
    pub curve: DiscountCurve,
    pub index: IndexSource,
    pub smoothing: SmoothingConfig,
    pub n_paths: usize,
    pub seed: u64,
    draws: Vec<PathDraws>,
}

/// Curve-dependent inputs of a valuation.
#[derive(Debug, Clone)]
struct Market {
    base: CashFlowSchedule,
    dfs: Vec<f64>,
    fixings: Vec<f64>,
}

impl PricingContext {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        deal: Deal,
        base: CashFlowSchedule,
        curve: DiscountCurve,
        index: IndexSource,
        smoothing: SmoothingConfig,
        n_paths: usize,
        seed: u64,
    ) -> Result<Self> {
        if n_paths == 0 {
            return Err(Error::Config("at least one path is required".into()));
        }
        base.validate()?;
        curve.validate()?;
        smoothing.validate()?;
        if deal.n_periods() != base.len() {
            return Err(Error::GridMismatch(format!(
                "deal has {} periods, base scenario {}",
                deal.n_periods(),
                base.len()
            )));
        }
        let n = base.len();
        let draws = (0..n_paths)
            .into_par_iter()
            .map(|p| PathDraws::generate(n, seed, p as u64))
            .collect();
        let ctx = PricingContext {
            deal,
            base,
            curve,
            index,
            smoothing,
            n_paths,
            seed,
            draws,
        };
        ctx.market(&Bump::NONE)?;
        Ok(ctx)
    }

    fn market(&self, bump: &Bump) -> Result<Market> {
        let base = if bump.scale == 1.0 {
            self.base.clone()
        } else {
            self.base.scaled(bump.scale)
        };
        let discount = self.curve.shifted(bump.discount_bp);
        let dfs = base.times.iter().map(|&t| discount.discount(t)).collect();
        let fixings = self.index.shifted(bump.index_bp).fixings(
            &self.curve.shifted(bump.index_bp),
            &base.times,
            self.deal.config.accrual,
        )?;
        Ok(Market { base, dfs, fixings })
    }

    fn path_flows<S: Scalar>(
        &self,
        params: &EngineParams<S>,
        draws: &PathDraws,
        market: &Market,
        mode: Mode,
    ) -> Result<TrancheCashFlows<S>> {
        let collections = compose(&market.base, params, draws, &self.smoothing, mode);
        run_waterfall(
            &collections,
            &self.deal,
            &market.fixings,
            mode,
            &self.smoothing,
        )
    }

    fn path_prices<S: Scalar>(
        &self,
        params: &EngineParams<S>,
        draws: &PathDraws,
        market: &Market,
        mode: Mode,
    ) -> Result<[S; 4]> {
        let flows = self.path_flows(params, draws, market, mode)?;
        let notionals = self.deal.config.notionals();
        Ok(Tranche::ALL
            .map(|t| discounted(&flows.flows(t), &market.dfs) * (100.0 / notionals[t.index()])))
    }

    fn sample_prices(
        &self,
        params: &EngineParams,
        market: &Market,
        mode: Mode,
    ) -> Result<Vec<[f64; 4]>> {
        params.validate()?;
        self.draws
            .par_iter()
            .enumerate()
            .map(|(i, d)| {
                let p = self.path_prices(params, d, market, mode)?;
                if p.iter().any(|x| !x.is_finite()) {
                    return Err(Error::NonFinitePath(i));
                }
                Ok(p)
            })
            .collect()
    }

    fn mean_prices(samples: &[[f64; 4]]) -> [f64; 4] {
        let mut acc = [0.0; 4];
        for s in samples {
            for i in 0..4 {
                acc[i] += s[i];
            }
        }
        acc.map(|a| a / samples.len() as f64)
    }

    /// Mean tranche prices only; the calibration objective.
    pub fn mean_prices_at(&self, params: &EngineParams, mode: Mode) -> Result<[f64; 4]> {
        let market = self.market(&Bump::NONE)?;
        Ok(Self::mean_prices(
            &self.sample_prices(params, &market, mode)?,
        ))
    }

    /// Mean prices under `bump`, with the same random draws.
    pub fn bumped_prices(
        &self,
        params: &EngineParams,
        mode: Mode,
        bump: &Bump,
    ) -> Result<[f64; 4]> {
        let market = self.market(bump)?;
        Ok(Self::mean_prices(
            &self.sample_prices(params, &market, mode)?,
        ))
    }

    /// Price change per tranche for a +1bp rate shift under `convention`.
    pub fn dv01(
        &self,
        params: &EngineParams,
        mode: Mode,
        convention: RateBump,
        bp: f64,
    ) -> Result<[f64; 4]> {
        let base = self.mean_prices_at(params, mode)?;
        let up = self.bumped_prices(params, mode, &Bump::rates(convention, bp))?;
        Ok(std::array::from_fn(|i| up[i] - base[i]))
    }

    /// Full price distribution per tranche.
    pub fn price(&self, params: &EngineParams, mode: Mode) -> Result<PriceReport> {
        let market = self.market(&Bump::NONE)?;
        let samples = self.sample_prices(params, &market, mode)?;
        let notionals = self.deal.config.notionals();
        let tranches = Tranche::ALL
            .iter()
            .map(|&t| {
                let s: Vec<f64> = samples.iter().map(|p| p[t.index()]).collect();
                let (price, std_error) = mean_and_se(&s);
                TrancheReport {
                    tranche: t,
                    notional: notionals[t.index()],
                    price,
                    std_error,
                    samples: s,
                    gradients: None,
                    dv01: None,
                    bv01: None,
                }
            })
            .collect();
        Ok(PriceReport {
            n_paths: self.n_paths,
            seed: self.seed,
            mode,
            tranches,
        })
    }

    /// Pathwise reverse-mode gradients of every tranche price, averaged over paths.
    pub fn price_gradients(&self, params: &EngineParams) -> Result<[ParamGradients; 4]> {
        params.validate()?;
        let market = self.market(&Bump::NONE)?;
        let per_path: Vec<[[f64; 6]; 4]> = self
            .draws
            .par_iter()
            .map(|d| {
                let tape = Tape::with_eps(self.smoothing.eps);
                let theta = params.map(|v| tape.var(v));
                let prices = self.path_prices(&theta, d, &market, Mode::Smooth)?;
                let mut out = [[0.0; 6]; 4];
                for (i, p) in prices.iter().enumerate() {
                    let g = tape.backward(*p)?;
                    out[i] = theta.map(|v| g.wrt(v)).to_array();
                }
                Ok(out)
            })
            .collect::<Result<_>>()?;
        let mut acc = [[0.0; 6]; 4];
        for g in &per_path {
            for i in 0..4 {
                for k in 0..6 {
                    acc[i][k] += g[i][k];
                }
            }
        }
        let n = per_path.len() as f64;
        Ok(acc.map(|a| ParamGradients::from_array(a.map(|x| x / n))))
    }

    /// Prices with parameter gradients, DV01 and BV01 (smooth mode only).
    ///
    /// DV01 reprices after a +1bp parallel rate shift applied as `convention`
    /// says. BV01 reprices with the base scenario scaled to add one currency
    /// unit to its total.
    pub fn sensitivities(
        &self,
        params: &EngineParams,
        mode: Mode,
        convention: RateBump,
    ) -> Result<PriceReport> {
        if mode != Mode::Smooth {
            return Err(Error::GradientsRequireSmooth);
        }
        let mut report = self.price(params, mode)?;
        let grads = self.price_gradients(params)?;
        let base_prices = report.prices();
        let up = self.bumped_prices(params, mode, &Bump::rates(convention, 1.0))?;
        let total = self.base.total();
        let more = self.bumped_prices(
            params,
            mode,
            &Bump {
                scale: (total + 1.0) / total,
                ..Bump::NONE
            },
        )?;
        for (i, tr) in report.tranches.iter_mut().enumerate() {
            tr.gradients = Some(grads[i]);
            tr.dv01 = Some(up[i] - base_prices[i]);
            tr.bv01 = Some(more[i] - base_prices[i]);
        }
        Ok(report)
    }

    /// Expected price of each tranche at each evaluation date.
    ///
    /// On every path the strictly future flows are discounted to the date and
    /// divided by the balance outstanding there; a redeemed tranche counts
    /// at par.
    pub fn forward_prices(
        &self,
        params: &EngineParams,
        mode: Mode,
        eval_dates: &[f64],
    ) -> Result<ForwardProfile> {
        params.validate()?;
        let market = self.market(&Bump::NONE)?;
        let times = &market.base.times;
        if let Some(&d) = eval_dates.iter().find(|&&d| d < 0.0 || !d.is_finite()) {
            return Err(Error::Config(format!(
                "evaluation date {d} outside the grid"
            )));
        }
        let notionals = self.deal.config.notionals();
        let per_path: Vec<Vec<[(f64, f64); 4]>> = self
            .draws
            .par_iter()
            .map(|d| {
                let flows = self.path_flows(params, d, &market, mode)?;
                let by_tranche: Vec<Vec<f64>> =
                    Tranche::ALL.iter().map(|&t| flows.flows(t)).collect();
                Ok(eval_dates
                    .iter()
                    .map(|&date| {
                        let df_date = self.curve.discount(date);
                        let paid = times.partition_point(|&t| t <= date);
                        Tranche::ALL.map(|t| {
                            let i = t.index();
                            let remaining: f64 = by_tranche[i][paid..]
                                .iter()
                                .zip(&market.dfs[paid..])
                                .map(|(cf, df)| cf * df / df_date)
                                .sum();
                            let outstanding = if paid == 0 {
                                notionals[i]
                            } else {
                                flows.outstanding[paid - 1][i]
                            };
                            let price = if outstanding > 1e-9 * notionals[i] {
                                100.0 * remaining / outstanding
                            } else {
                                100.0
                            };
                            (price, remaining)
                        })
                    })
                    .collect())
            })
            .collect::<Result<_>>()?;
        let n = per_path.len() as f64;
        let mut points = Vec::new();
        for (k, &date) in eval_dates.iter().enumerate() {
            for t in Tranche::ALL {
                let (mut price, mut pv) = (0.0, 0.0);
                for path in &per_path {
                    price += path[k][t.index()].0;
                    pv += path[k][t.index()].1;
                }
                points.push(ForwardPoint {
                    date,
                    tranche: t,
                    price: price / n,
                    remaining_pv: pv / n,
                });
            }
        }
        Ok(ForwardProfile { points })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ForwardPoint {
    pub date: f64,
    pub tranche: Tranche,
    /// Expected price in percent of the outstanding balance.
    pub price: f64,
    /// Expected value of the remaining flows at the date, in currency.
    pub remaining_pv: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForwardProfile {
    pub points: Vec<ForwardPoint>,
}

impl ForwardProfile {
    pub fn series(&self, t: Tranche) -> Vec<ForwardPoint> {
        self.points
            .iter()
            .filter(|p| p.tranche == t)
            .copied()
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    /// `bins + 1` edges.
    pub edges: Vec<f64>,
    pub counts: Vec<usize>,
}

/// Equal-width histogram of a price sample.
pub fn price_distribution(samples: &[f64], bins: usize) -> Result<Histogram> {
    if bins < 1 {
        return Err(Error::Config("histogram needs at least one bin".into()));
    }
    if samples.is_empty() {
        return Err(Error::Config("empty price sample".into()));
    }
    let lo = samples.iter().copied().fold(f64::INFINITY, f64::min);
    let mut hi = samples.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if hi <= lo {
        hi = lo + 1.0;
    }
    let width = (hi - lo) / bins as f64;
    let edges = (0..=bins).map(|i| lo + width * i as f64).collect();
    let mut counts = vec![0; bins];
    for &x in samples {
        let b = (((x - lo) / width) as usize).min(bins - 1);
        counts[b] += 1;
    }
    Ok(Histogram { edges, counts })
}

/// Number of local maxima of a Gaussian kernel density estimate.
///
/// Peaks lower than `min_height` times the tallest one are ignored.
pub fn kde_mode_count(samples: &[f64], bandwidth: f64, min_height: f64) -> usize {
    if samples.is_empty() || !(bandwidth > 0.0) {
        return 0;
    }
    let lo = samples.iter().copied().fold(f64::INFINITY, f64::min) - 3.0 * bandwidth;
    let hi = samples.iter().copied().fold(f64::NEG_INFINITY, f64::max) + 3.0 * bandwidth;
    let grid = 512;
    let density: Vec<f64> = (0..grid)
        .map(|i| {
            let x = lo + (hi - lo) * i as f64 / (grid - 1) as f64;
            samples
                .iter()
                .map(|s| (-0.5 * ((x - s) / bandwidth).powi(2)).exp())
                .sum()
        })
        .collect();
    let top = density.iter().copied().fold(0.0, f64::max);
    density
        .windows(3)
        .filter(|w| w[1] > w[0] && w[1] >= w[2] && w[1] >= min_height * top)
        .count()
}

/// Silverman's rule-of-thumb bandwidth.
pub fn silverman_bandwidth(samples: &[f64]) -> f64 {
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    let sd = (samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0)).sqrt();
    1.06 * sd * n.powf(-0.2)
}
