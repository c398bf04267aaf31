//! Priority of payments over Senior, Mezzanine, Junior and a limited recourse
//! loan (LRL), with a cumulative collection ratio (CCR) trigger on Mezzanine
//! interest and a cash reserve sized on the Senior balance.
//!
//! Each period allocates collections plus the reserve carried from the prior
//! period in this order:
//!
//! 1. senior expenses
//! 2. servicer fees
//! 3. LRL interest
//! 4. Senior interest
//! 5. Mezzanine interest, deferred while the CCR is below threshold
//! 6. reserve top-up
//! 7. LRL principal, linked to the Senior principal of the period
//! 8. Senior principal
//! 9. deferred Mezzanine interest
//! 10. Mezzanine principal
//! 11. Junior interest
//! 12. Junior principal
//! 13. Junior variable return (everything left)
//!
//! Every capped payment is `min(due, cash)`; smooth mode swaps in the
//! surrogates of [`crate::autodiff`].

use serde::{Deserialize, Serialize};

use crate::autodiff::{capped_payment, step, Mode, Scalar, SmoothingConfig};
use crate::engines::CashFlowSchedule;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Tranche {
    Senior,
    Mezzanine,
    Junior,
    Lrl,
}

impl Tranche {
    pub const ALL: [Tranche; 4] = [
        Tranche::Senior,
        Tranche::Mezzanine,
        Tranche::Junior,
        Tranche::Lrl,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            Tranche::Senior => "senior",
            Tranche::Mezzanine => "mezzanine",
            Tranche::Junior => "junior",
            Tranche::Lrl => "lrl",
        }
    }
}

impl std::fmt::Display for Tranche {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase", deny_unknown_fields)]
pub enum Coupon {
    /// Index fixing plus a spread, annual.
    Floating { spread: f64 },
    /// Fixed annual rate.
    Fixed { rate: f64 },
}

impl Coupon {
    pub fn rate(&self, fixing: f64) -> f64 {
        match *self {
            Coupon::Floating { spread } => fixing + spread,
            Coupon::Fixed { rate } => rate,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrancheSpec {
    pub notional: f64,
    pub coupon: Coupon,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DealConfig {
    pub senior: TrancheSpec,
    pub mezzanine: TrancheSpec,
    pub junior: TrancheSpec,
    pub lrl: TrancheSpec,
    pub ccr_threshold: f64,
    /// Cumulative contractual collections per period; defaults to the
    /// cumulative base scenario.
    #[serde(default)]
    pub contractual_profile: Option<Vec<f64>>,
    /// Senior expenses per period.
    #[serde(default)]
    pub senior_fees: f64,
    /// Servicer fee as a fraction of period collections.
    #[serde(default)]
    pub servicer_fee_rate: f64,
    /// Reserve target as a fraction of the outstanding Senior balance.
    #[serde(default)]
    pub reserve_target_rate: f64,
    /// LRL principal per unit of Senior principal; defaults to the notional ratio.
    #[serde(default)]
    pub lrl_link_ratio: Option<f64>,
    /// Accrual fraction of a period, in years.
    #[serde(default = "half_year")]
    pub accrual: f64,
}

fn half_year() -> f64 {
    0.5
}

impl DealConfig {
    /// Four-class structure of the toy deal, with zero fees and reserve.
    pub fn toy() -> Self {
        DealConfig {
            senior: TrancheSpec {
                notional: 135.0,
                coupon: Coupon::Floating { spread: 0.025 },
            },
            mezzanine: TrancheSpec {
                notional: 31.5,
                coupon: Coupon::Floating { spread: 0.05 },
            },
            junior: TrancheSpec {
                notional: 13.5,
                coupon: Coupon::Fixed { rate: 0.10 },
            },
            lrl: TrancheSpec {
                notional: 5.805,
                coupon: Coupon::Floating { spread: 0.002 },
            },
            ccr_threshold: 0.9,
            contractual_profile: None,
            senior_fees: 0.0,
            servicer_fee_rate: 0.0,
            reserve_target_rate: 0.0,
            lrl_link_ratio: None,
            accrual: 0.5,
        }
    }

    pub fn tranche(&self, t: Tranche) -> &TrancheSpec {
        match t {
            Tranche::Senior => &self.senior,
            Tranche::Mezzanine => &self.mezzanine,
            Tranche::Junior => &self.junior,
            Tranche::Lrl => &self.lrl,
        }
    }

    pub fn notionals(&self) -> [f64; 4] {
        Tranche::ALL.map(|t| self.tranche(t).notional)
    }

    pub fn link_ratio(&self) -> f64 {
        self.lrl_link_ratio
            .unwrap_or(self.lrl.notional / self.senior.notional)
    }

    pub fn validate(&self) -> Result<()> {
        for t in Tranche::ALL {
            let spec = self.tranche(t);
            if !(spec.notional > 0.0) || !spec.notional.is_finite() {
                return Err(Error::Config(format!("{t} notional must be > 0")));
            }
            let r = match spec.coupon {
                Coupon::Floating { spread } => spread,
                Coupon::Fixed { rate } => rate,
            };
            if !r.is_finite() {
                return Err(Error::Config(format!("{t} coupon must be finite")));
            }
        }
        if !(self.ccr_threshold > 0.0 && self.ccr_threshold <= 1.0) {
            return Err(Error::Config("ccr_threshold must lie in (0, 1]".into()));
        }
        for (name, v) in [
            ("senior_fees", self.senior_fees),
            ("servicer_fee_rate", self.servicer_fee_rate),
            ("reserve_target_rate", self.reserve_target_rate),
            ("lrl_link_ratio", self.link_ratio()),
        ] {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(Error::Config(format!("{name} must be >= 0")));
            }
        }
        if !(self.accrual > 0.0) {
            return Err(Error::Config("accrual must be > 0".into()));
        }
        if let Some(p) = &self.contractual_profile {
            if p.windows(2).any(|w| w[1] < w[0]) {
                return Err(Error::Config(
                    "contractual_profile must be non-decreasing".into(),
                ));
            }
        }
        Ok(())
    }
}

/// A validated deal bound to its payment grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Deal {
    pub config: DealConfig,
    /// Cumulative contractual collections per period.
    pub profile: Vec<f64>,
}

impl Deal {
    /// Binds `config` to the grid of `base`, which also supplies the default profile.
    pub fn new(config: DealConfig, base: &CashFlowSchedule) -> Result<Self> {
        config.validate()?;
        let profile = match &config.contractual_profile {
            Some(p) => p.clone(),
            None => base
                .amounts
                .iter()
                .scan(0.0, |acc, a| {
                    *acc += a;
                    Some(*acc)
                })
                .collect(),
        };
        if profile.len() != base.len() {
            return Err(Error::GridMismatch(format!(
                "contractual profile has {} periods, grid has {}",
                profile.len(),
                base.len()
            )));
        }
        Ok(Deal { config, profile })
    }

    pub fn n_periods(&self) -> usize {
        self.profile.len()
    }
}

/// Balances carried between periods.
#[derive(Debug, Clone, Copy)]
pub struct WaterfallState<S> {
    pub outstanding: [S; 4],
    pub reserve: S,
    pub deferred_mezz: S,
    pub cumulative: S,
    /// Index of the next period to allocate.
    pub period: usize,
    pub guard_hits: u32,
}

impl<S: Scalar> WaterfallState<S> {
    pub fn initial(deal: &Deal) -> Self {
        WaterfallState {
            outstanding: deal.config.notionals().map(S::constant),
            reserve: S::constant(0.0),
            deferred_mezz: S::constant(0.0),
            cumulative: S::constant(0.0),
            period: 0,
            guard_hits: 0,
        }
    }
}

/// Cumulative collections over the contractual profile at `period`.
///
/// A non-positive profile value is guarded by `eps` and reported through the
/// returned flag.
pub fn ccr<S: Scalar>(cumulative: S, profile: &[f64], period: usize, eps: f64) -> (S, bool) {
    let denom = profile[period];
    let guarded = denom.abs() < eps;
    (cumulative.div_guarded(S::constant(denom), eps), guarded)
}

/// Allocation of one period.
#[derive(Debug, Clone, Copy)]
pub struct PeriodFlows<S> {
    pub available: S,
    pub ccr: S,
    pub senior_expenses: S,
    pub servicer_fees: S,
    pub interest: [S; 4],
    pub principal: [S; 4],
    /// Junior variable return.
    pub variable: S,
    /// Reserve balance posted this period and carried to the next.
    pub reserve_posted: S,
    /// Mezzanine interest added to the deferred balance.
    pub mezz_deferred: S,
}

impl<S: Scalar> PeriodFlows<S> {
    /// Cash received by `t` this period.
    pub fn tranche_total(&self, t: Tranche) -> S {
        let i = t.index();
        let base = self.interest[i] + self.principal[i];
        if t == Tranche::Junior {
            base + self.variable
        } else {
            base
        }
    }

    /// Sum of every outflow plus the reserve posted.
    pub fn allocated(&self) -> S {
        let mut s = self.senior_expenses + self.servicer_fees + self.variable + self.reserve_posted;
        for i in 0..4 {
            s += self.interest[i] + self.principal[i];
        }
        s
    }
}

struct Cash<'a, S> {
    left: S,
    mode: Mode,
    cfg: &'a SmoothingConfig,
    period: usize,
}

impl<S: Scalar> Cash<'_, S> {
    fn pay(&mut self, due: S, step: &'static str) -> Result<S> {
        let paid = capped_payment(due, self.left, self.mode, self.cfg);
        self.left -= paid;
        if !self.left.value().is_finite() || !paid.value().is_finite() {
            return Err(Error::NonFiniteStep {
                step,
                period: self.period,
            });
        }
        Ok(paid)
    }

    fn take(&mut self, amount: S) {
        self.left -= amount;
    }
}

/// Allocates one period of `collections`.
pub fn run_waterfall_period<S: Scalar>(
    collections: S,
    state: &WaterfallState<S>,
    deal: &Deal,
    index_fixing: f64,
    mode: Mode,
    cfg: &SmoothingConfig,
) -> Result<(WaterfallState<S>, PeriodFlows<S>)> {
    let c = &deal.config;
    let j = state.period;
    if j >= deal.n_periods() {
        return Err(Error::GridMismatch(format!(
            "period {j} beyond the deal grid"
        )));
    }
    if collections.value() < 0.0 {
        return Err(Error::NegativeCash(collections.value()));
    }
    let is_final = j + 1 == deal.n_periods();
    let dt = c.accrual;
    let rate = |t: Tranche| c.tranche(t).coupon.rate(index_fixing) * dt;
    let [sen, mez, jun, lrl] = [
        Tranche::Senior.index(),
        Tranche::Mezzanine.index(),
        Tranche::Junior.index(),
        Tranche::Lrl.index(),
    ];
    let out = state.outstanding;

    let cumulative = state.cumulative + collections;
    let (ratio, guarded) = ccr(cumulative, &deal.profile, j, cfg.eps);
    let trigger_ok = step(ratio - c.ccr_threshold, cfg.trigger_k, mode);

    let available = collections + state.reserve;
    let mut cash = Cash {
        left: available,
        mode,
        cfg,
        period: j,
    };
    let zero = S::constant(0.0);
    let mut interest = [zero; 4];
    let mut principal = [zero; 4];

    // 1-2
    let senior_expenses = cash.pay(S::constant(c.senior_fees), "senior expenses")?;
    let servicer_fees = cash.pay(collections * c.servicer_fee_rate, "servicer fees")?;
    // 3-4
    interest[lrl] = cash.pay(out[lrl] * rate(Tranche::Lrl), "lrl interest")?;
    interest[sen] = cash.pay(out[sen] * rate(Tranche::Senior), "senior interest")?;
    // 5
    let mezz_due = out[mez] * rate(Tranche::Mezzanine);
    let mezz_current = trigger_ok * capped_payment(mezz_due, cash.left, mode, cfg);
    cash.take(mezz_current);
    let mezz_deferred = mezz_due - mezz_current;
    let mut deferred = state.deferred_mezz + mezz_deferred;
    // 6
    let reserve_target = if is_final {
        zero
    } else {
        out[sen] * c.reserve_target_rate
    };
    let reserve_posted = cash.pay(reserve_target, "reserve")?;
    // 7-8: LRL principal = ratio x Senior principal, capped at the LRL balance
    let link = c.link_ratio();
    let senior_share = capped_payment(out[sen], cash.left * (1.0 / (1.0 + link)), mode, cfg);
    principal[lrl] = capped_payment(senior_share * link, out[lrl], mode, cfg);
    cash.take(principal[lrl]);
    principal[sen] = cash.pay(out[sen], "senior principal")?;
    // 9
    let gate = if is_final {
        S::constant(1.0)
    } else {
        trigger_ok
    };
    let mezz_catch_up = gate * capped_payment(deferred, cash.left, mode, cfg);
    cash.take(mezz_catch_up);
    deferred -= mezz_catch_up;
    interest[mez] = mezz_current + mezz_catch_up;
    // 10-12
    principal[mez] = cash.pay(out[mez], "mezzanine principal")?;
    interest[jun] = cash.pay(out[jun] * rate(Tranche::Junior), "junior interest")?;
    principal[jun] = cash.pay(out[jun], "junior principal")?;
    // 13
    let variable = cash.left;

    let mut outstanding = out;
    for i in 0..4 {
        outstanding[i] -= principal[i];
    }
    let flows = PeriodFlows {
        available,
        ccr: ratio,
        senior_expenses,
        servicer_fees,
        interest,
        principal,
        variable,
        reserve_posted,
        mezz_deferred,
    };
    if !flows.allocated().value().is_finite() || !deferred.value().is_finite() {
        return Err(Error::NonFiniteStep {
            step: "junior variable return",
            period: j,
        });
    }
    let next = WaterfallState {
        outstanding,
        reserve: reserve_posted,
        deferred_mezz: deferred,
        cumulative,
        period: j + 1,
        guard_hits: state.guard_hits + guarded as u32,
    };
    Ok((next, flows))
}

/// Per-period allocations of a whole path.
#[derive(Debug, Clone)]
pub struct TrancheCashFlows<S> {
    pub periods: Vec<PeriodFlows<S>>,
    /// Balances after each period's payments.
    pub outstanding: Vec<[S; 4]>,
    pub deferred_mezz: Vec<S>,
    pub final_state: WaterfallState<S>,
}

impl<S: Scalar> TrancheCashFlows<S> {
    /// Cash received by `t` in every period.
    pub fn flows(&self, t: Tranche) -> Vec<S> {
        self.periods.iter().map(|p| p.tranche_total(t)).collect()
    }

    pub fn len(&self) -> usize {
        self.periods.len()
    }

    pub fn is_empty(&self) -> bool {
        self.periods.is_empty()
    }
}

/// Runs every period of `collections` through the waterfall.
pub fn run_waterfall<S: Scalar>(
    collections: &[S],
    deal: &Deal,
    index_fixings: &[f64],
    mode: Mode,
    cfg: &SmoothingConfig,
) -> Result<TrancheCashFlows<S>> {
    let n = deal.n_periods();
    if collections.len() != n || index_fixings.len() != n {
        return Err(Error::GridMismatch(format!(
            "{} collections and {} fixings for a {n}-period deal",
            collections.len(),
            index_fixings.len()
        )));
    }
    let mut state = WaterfallState::initial(deal);
    let mut periods = Vec::with_capacity(n);
    let mut outstanding = Vec::with_capacity(n);
    let mut deferred = Vec::with_capacity(n);
    for (&cf, &fixing) in collections.iter().zip(index_fixings) {
        let (next, flows) = run_waterfall_period(cf, &state, deal, fixing, mode, cfg)?;
        state = next;
        periods.push(flows);
        outstanding.push(state.outstanding);
        deferred.push(state.deferred_mezz);
    }
    Ok(TrancheCashFlows {
        periods,
        outstanding,
        deferred_mezz: deferred,
        final_state: state,
    })
}
