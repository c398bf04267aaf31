//! Single-scenario valuation metrics per tranche: IRR, Z-spread, annuity and
//! asset-swap spread.
//!
//! The scenario is the base collection schedule run through the exact-mode
//! waterfall without any engine applied.

use serde::{Deserialize, Serialize};

use crate::autodiff::{Mode, SmoothingConfig};
use crate::engines::CashFlowSchedule;
use crate::error::{Error, Result};
use crate::pricing::{DiscountCurve, IndexSource};
use crate::waterfall::{run_waterfall, Deal, Tranche};

pub const IRR_BRACKET: (f64, f64) = (-0.99, 10.0);
pub const Z_BRACKET: (f64, f64) = (-1.0, 10.0);

/// Root of a decreasing function on `[lo, hi]` by bisection down to
/// adjacent floats.
fn bisect_decreasing(f: impl Fn(f64) -> f64, lo: f64, hi: f64, what: &'static str) -> Result<f64> {
    let (mut a, mut b) = (lo, hi);
    let (fa, fb) = (f(a), f(b));
    if !(fa >= 0.0 && fb <= 0.0) {
        return Err(Error::NotBracketed(what));
    }
    if fa == 0.0 {
        return Ok(a);
    }
    if fb == 0.0 {
        return Ok(b);
    }
    for _ in 0..2000 {
        let m = 0.5 * (a + b);
        if m <= a || m >= b {
            break;
        }
        let fm = f(m);
        if fm == 0.0 {
            return Ok(m);
        }
        if fm > 0.0 {
            a = m;
        } else {
            b = m;
        }
    }
    Ok(if f(a).abs() <= f(b).abs() { a } else { b })
}

fn check_inputs(flows: &[f64], times: &[f64], price: f64) -> Result<()> {
    if flows.len() != times.len() {
        return Err(Error::GridMismatch(format!(
            "{} flows for {} times",
            flows.len(),
            times.len()
        )));
    }
    if !flows.iter().any(|&c| c > 0.0) {
        return Err(Error::Config(
            "at least one positive flow is required".into(),
        ));
    }
    if !(price > 0.0) {
        return Err(Error::Config(format!("price must be > 0, got {price}")));
    }
    Ok(())
}

/// Rate `r` with `Σ C_i (1 + r)^{-t_i} = P`.
pub fn irr(flows: &[f64], times: &[f64], price: f64) -> Result<f64> {
    check_inputs(flows, times, price)?;
    let npv = |r: f64| -> f64 {
        flows
            .iter()
            .zip(times)
            .map(|(c, t)| c * (1.0 + r).powf(-t))
            .sum::<f64>()
            - price
    };
    bisect_decreasing(npv, IRR_BRACKET.0, IRR_BRACKET.1, "IRR not bracketed")
}

/// Spread `z` with `Σ C_i D_i e^{-t_i z} = P`.
pub fn z_spread(flows: &[f64], times: &[f64], discounts: &[f64], price: f64) -> Result<f64> {
    check_inputs(flows, times, price)?;
    if discounts.len() != flows.len() {
        return Err(Error::GridMismatch(format!(
            "{} discount factors for {} flows",
            discounts.len(),
            flows.len()
        )));
    }
    let npv = |z: f64| -> f64 {
        flows
            .iter()
            .zip(times)
            .zip(discounts)
            .map(|((c, t), d)| c * d * (-t * z).exp())
            .sum::<f64>()
            - price
    };
    bisect_decreasing(npv, Z_BRACKET.0, Z_BRACKET.1, "z-spread not bracketed")
}

/// A value together with whether an `eps` guard replaced a denominator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Guarded {
    pub value: f64,
    pub guarded: bool,
}

/// `A = 100 / max(N - L, ε) · Σ_i D_{i+T} (A_i - L) Y_{i+T}`.
///
/// Plan entries whose lapsed index falls beyond the discount grid are dropped.
pub fn annuity(
    plan: &[f64],
    discounts: &[f64],
    year_fractions: &[f64],
    notional: f64,
    last: f64,
    lapse: usize,
    eps: f64,
) -> Result<Guarded> {
    if discounts.len() != year_fractions.len() {
        return Err(Error::GridMismatch(format!(
            "{} discount factors for {} year fractions",
            discounts.len(),
            year_fractions.len()
        )));
    }
    let span = notional - last;
    let guarded = span < eps;
    let sum: f64 = plan
        .iter()
        .enumerate()
        .filter_map(|(i, a)| {
            let k = i + lapse;
            (k < discounts.len()).then(|| discounts[k] * (a - last) * year_fractions[k])
        })
        .sum();
    Ok(Guarded {
        value: 100.0 / span.max(eps) * sum,
        guarded,
    })
}

/// `(P0 - P) / A`, with `|A|` floored at `eps`.
pub fn asw(null_price: f64, price: f64, annuity: f64, eps: f64) -> Guarded {
    let guarded = annuity.abs() < eps;
    let a = if guarded {
        if annuity < 0.0 {
            -eps
        } else {
            eps
        }
    } else {
        annuity
    };
    Guarded {
        value: (null_price - price) / a,
        guarded,
    }
}

/// Inputs of the metric formulas for one tranche.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricInputs {
    pub flows: Vec<f64>,
    pub times: Vec<f64>,
    pub discounts: Vec<f64>,
    /// Observed price in currency.
    pub price: f64,
    /// Null-scenario price in currency.
    pub null_price: f64,
    /// Balance outstanding at the start of each period.
    pub plan: Vec<f64>,
    pub year_fractions: Vec<f64>,
    pub notional: f64,
    pub last: f64,
    pub lapse: usize,
    pub eps: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrancheMetrics {
    pub tranche: Tranche,
    pub irr: Option<f64>,
    pub z_spread: Option<f64>,
    pub annuity: f64,
    pub asw: f64,
    /// Problems met on the way: failed root searches and eps guards.
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub flags: Vec<String>,
}

/// Evaluates all four metrics. A root that cannot be bracketed is reported
/// as a flag with the metric left empty.
pub fn compute_metrics(tranche: Tranche, m: &MetricInputs) -> Result<TrancheMetrics> {
    let mut flags = Vec::new();
    let mut root = |r: Result<f64>| match r {
        Ok(v) => Some(v),
        Err(e) => {
            flags.push(e.to_string());
            None
        }
    };
    let irr_v = root(irr(&m.flows, &m.times, m.price));
    let z_v = root(z_spread(&m.flows, &m.times, &m.discounts, m.price));
    let a = annuity(
        &m.plan,
        &m.discounts,
        &m.year_fractions,
        m.notional,
        m.last,
        m.lapse,
        m.eps,
    )?;
    if a.guarded {
        flags.push("annuity denominator guarded".into());
    }
    let s = asw(m.null_price, m.price, a.value, m.eps);
    if s.guarded {
        flags.push("asw annuity guarded".into());
    }
    Ok(TrancheMetrics {
        tranche,
        irr: irr_v,
        z_spread: z_v,
        annuity: a.value,
        asw: s.value,
        flags,
    })
}

/// Null-scenario inputs for every tranche, with observed prices given in
/// percent of initial notional.
pub fn null_scenario_inputs(
    deal: &Deal,
    base: &CashFlowSchedule,
    curve: &DiscountCurve,
    index: &IndexSource,
    prices: [f64; 4],
    eps: f64,
) -> Result<Vec<MetricInputs>> {
    let fixings = index.fixings(curve, &base.times, deal.config.accrual)?;
    let cfg = SmoothingConfig {
        eps,
        ..SmoothingConfig::default()
    };
    let cf = run_waterfall(&base.amounts, deal, &fixings, Mode::Exact, &cfg)?;
    let discounts: Vec<f64> = base.times.iter().map(|&t| curve.discount(t)).collect();
    let year_fractions = vec![deal.config.accrual; base.len()];
    let notionals = deal.config.notionals();
    Ok(Tranche::ALL
        .iter()
        .map(|&t| {
            let i = t.index();
            let flows = cf.flows(t);
            let null_price = flows.iter().zip(&discounts).map(|(c, d)| c * d).sum();
            let plan = std::iter::once(notionals[i])
                .chain(cf.outstanding.iter().map(|o| o[i]))
                .take(base.len())
                .collect();
            let last = cf.outstanding.last().map_or(notionals[i], |o| o[i]);
            MetricInputs {
                flows,
                times: base.times.clone(),
                discounts: discounts.clone(),
                price: prices[i] * notionals[i] / 100.0,
                null_price,
                plan,
                year_fractions: year_fractions.clone(),
                notional: notionals[i],
                last,
                lapse: 0,
                eps,
            }
        })
        .collect())
}
