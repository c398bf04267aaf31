//! Toy collateral pool: rental income net of a collection fee plus
//! depreciated sale proceeds at copula-correlated exponential sale times.
//!
//! Sale times are rounded up onto the payment grid for cash placement while
//! the sale price uses the unrounded time. Rent accrues in every period
//! strictly before the sale period. Assets still unsold at the horizon are
//! sold in the final period at `v0 * delta^T`.

use serde::{Deserialize, Serialize};

use crate::engines::CashFlowSchedule;
use crate::error::{Error, Result};
use crate::sampling::{copula_exponential_times, Purpose, RandomStream};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AssetTypeSpec {
    /// Initial value per asset.
    pub v0: f64,
    /// Annual sale intensity.
    pub lambda_rate: f64,
    /// Annual price decay factor.
    pub delta: f64,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PoolConfig {
    pub asset_types: Vec<AssetTypeSpec>,
    /// Annual rent as a fraction of asset value.
    pub rent_yield: f64,
    /// Collection fee taken from rent.
    pub collection_fee: f64,
    /// Horizon in years.
    pub horizon: f64,
    /// Copula correlation of sale times.
    pub rho: f64,
    /// Years per payment period.
    #[serde(default = "default_period")]
    pub period: f64,
    /// Size of the random sale-time offset in years.
    #[serde(default = "default_offset")]
    pub sale_offset: f64,
}

fn default_period() -> f64 {
    0.5
}

fn default_offset() -> f64 {
    0.5
}

impl PoolConfig {
    /// The five-type pool used throughout the documentation and tests.
    pub fn toy() -> Self {
        let v0 = [1.0, 1.5, 2.0, 2.5, 3.0];
        let lambda = [0.5, 0.4, 0.45, 0.35, 0.3];
        let delta = [0.98, 0.97, 0.99, 0.96, 0.95];
        PoolConfig {
            asset_types: (0..5)
                .map(|i| AssetTypeSpec {
                    v0: v0[i],
                    lambda_rate: lambda[i],
                    delta: delta[i],
                    count: 20,
                })
                .collect(),
            rent_yield: 0.05,
            collection_fee: 0.10,
            horizon: 10.0,
            rho: 0.5,
            period: 0.5,
            sale_offset: 0.5,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.asset_types.is_empty() {
            return Err(Error::Config("pool needs at least one asset type".into()));
        }
        for (i, a) in self.asset_types.iter().enumerate() {
            if !(a.v0 > 0.0) {
                return Err(Error::Config(format!("asset_types[{i}].v0 must be > 0")));
            }
            if !(a.lambda_rate > 0.0) || !a.lambda_rate.is_finite() {
                return Err(Error::Config(format!(
                    "asset_types[{i}].lambda_rate must be > 0"
                )));
            }
            if !(a.delta > 0.0 && a.delta <= 1.0) {
                return Err(Error::Config(format!(
                    "asset_types[{i}].delta must lie in (0, 1]"
                )));
            }
            if a.count == 0 {
                return Err(Error::Config(format!(
                    "asset_types[{i}].count must be >= 1"
                )));
            }
        }
        if !(0.0..1.0).contains(&self.collection_fee) {
            return Err(Error::Config("collection_fee must lie in [0, 1)".into()));
        }
        if !(self.rent_yield >= 0.0) {
            return Err(Error::Config("rent_yield must be >= 0".into()));
        }
        if !(self.horizon > 0.0) || !(self.period > 0.0) {
            return Err(Error::Config("horizon and period must be > 0".into()));
        }
        if !(0.0..=1.0).contains(&self.rho) {
            return Err(Error::Config("pool rho must lie in [0, 1]".into()));
        }
        if !(self.sale_offset >= 0.0) {
            return Err(Error::Config("sale_offset must be >= 0".into()));
        }
        Ok(())
    }

    pub fn n_periods(&self) -> usize {
        (self.horizon / self.period).round() as usize
    }

    fn rent_per_period(&self, v0: f64) -> f64 {
        self.rent_yield * v0 * self.period * (1.0 - self.collection_fee)
    }

    /// 1-based period in which a sale at `t` years is paid, or `None` past the horizon.
    fn sale_period(&self, t: f64) -> Option<usize> {
        let n = self.n_periods();
        let m = ((t / self.period) - 1e-12).ceil().max(1.0);
        if m > n as f64 {
            None
        } else {
            Some(m as usize)
        }
    }
}

/// One simulated collection path.
pub fn simulate_pool(config: &PoolConfig, seed: u64, path: u64) -> Result<CashFlowSchedule> {
    config.validate()?;
    let n = config.n_periods();
    let lambdas: Vec<f64> = config.asset_types.iter().map(|a| a.lambda_rate).collect();
    let counts: Vec<usize> = config.asset_types.iter().map(|a| a.count).collect();
    let sale_times = copula_exponential_times(
        &lambdas,
        &counts,
        config.rho,
        &RandomStream::for_path(seed, path, Purpose::SaleTime),
    )?;
    let mut coins = RandomStream::for_path(seed, path, Purpose::SaleOffset).rng();

    let mut amounts = vec![0.0; n];
    let mut times = sale_times.iter();
    for spec in &config.asset_types {
        let rent = config.rent_per_period(spec.v0);
        for &ts in times.by_ref().take(spec.count) {
            let offset = if coins.coin() {
                config.sale_offset
            } else {
                0.0
            };
            let t = ts + offset;
            let (period, proceeds) = match config.sale_period(t) {
                Some(m) => (m, spec.v0 * spec.delta.powf(t)),
                None => (n, spec.v0 * spec.delta.powf(config.horizon)),
            };
            for slot in &mut amounts[..period - 1] {
                *slot += rent;
            }
            amounts[period - 1] += proceeds;
        }
    }
    CashFlowSchedule::regular(amounts, config.period)
}

/// `E[delta^Ts 1{x < Ts <= y}]` for `Ts ~ Exp(lambda)`.
fn discounted_window(lambda: f64, delta: f64, x: f64, y: f64) -> f64 {
    if y <= 0.0 || y <= x {
        return 0.0;
    }
    let rate = lambda - delta.ln();
    let x = x.max(0.0);
    lambda / rate * ((-rate * x).exp() - (-rate * y).exp())
}

fn survival(lambda: f64, x: f64) -> f64 {
    (-lambda * x.max(0.0)).exp()
}

/// Expected collections per period.
///
/// Uses the exponential sale law, the fair-coin offset and the grid rounding
/// rule. The copula correlation does not enter since expectations are linear.
pub fn base_scenario(config: &PoolConfig) -> Result<CashFlowSchedule> {
    config.validate()?;
    let n = config.n_periods();
    let dt = config.period;
    let offsets = [0.0, config.sale_offset];
    let mut amounts = vec![0.0; n];
    for spec in &config.asset_types {
        let lam = spec.lambda_rate;
        let count = spec.count as f64;
        let rent = config.rent_per_period(spec.v0);
        let alive = |x: f64| {
            offsets
                .iter()
                .map(|&h| 0.5 * survival(lam, x - h))
                .sum::<f64>()
        };
        let window = |a: f64, b: f64| {
            offsets
                .iter()
                .map(|&h| {
                    0.5 * spec.delta.powf(h) * discounted_window(lam, spec.delta, a - h, b - h)
                })
                .sum::<f64>()
        };
        for j in 1..=n {
            let upper = j as f64 * dt;
            let lower = if j == 1 {
                f64::NEG_INFINITY
            } else {
                (j - 1) as f64 * dt
            };
            let mut e = 0.0;
            if j < n {
                e += rent * alive(upper);
            }
            e += spec.v0 * window(lower, upper);
            if j == n {
                e += spec.v0 * spec.delta.powf(config.horizon) * alive(upper);
            }
            amounts[j - 1] += count * e;
        }
    }
    CashFlowSchedule::regular(amounts, dt)
}
