//! The single JSON file that describes a whole run.

use std::path::Path;

use serde::{Deserialize, Serialize};
use waterfall_core::assetpool::PoolConfig;
use waterfall_core::autodiff::{Mode, SmoothingConfig};
use waterfall_core::calibration::{CalibrationTarget, DESettings, ParamSpace};
use waterfall_core::engines::EngineParams;
use waterfall_core::pricing::{DiscountCurve, IndexSource, RateBump};
use waterfall_core::waterfall::DealConfig;

use crate::error::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub pool: PoolConfig,
    pub deal: DealConfig,
    #[serde(default = "default_curve")]
    pub curve: DiscountCurve,
    #[serde(default)]
    pub index: IndexSource,
    #[serde(default = "EngineParams::toy_calibrated")]
    pub params: EngineParams,
    #[serde(default)]
    pub smoothing: SmoothingConfig,
    #[serde(default)]
    pub pricing: PricingOptions,
    #[serde(default)]
    pub calibration: CalibrationOptions,
    #[serde(default)]
    pub metrics: MetricsOptions,
}

fn default_curve() -> DiscountCurve {
    DiscountCurve::flat(0.03)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PricingOptions {
    pub paths: usize,
    pub seed: u64,
    pub mode: Mode,
    pub bins: usize,
    /// Pool paths written by `simulate`.
    pub simulate_paths: usize,
    /// Evaluation dates in years for `timelapse`; every grid date when empty.
    pub eval_dates: Vec<f64>,
    pub dv01: RateBump,
}

impl Default for PricingOptions {
    fn default() -> Self {
        PricingOptions {
            paths: 100_000,
            seed: 42,
            mode: Mode::Smooth,
            bins: 50,
            simulate_paths: 100,
            eval_dates: Vec::new(),
            dv01: RateBump::Index,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CalibrationOptions {
    pub targets: CalibrationTarget,
    pub paths: usize,
    pub space: ParamSpace,
    pub de: DESettings,
    /// Target shifts, in price points, for the robustness probe; none runs no probe.
    pub probe_shifts: Vec<f64>,
}

impl Default for CalibrationOptions {
    fn default() -> Self {
        CalibrationOptions {
            targets: CalibrationTarget::new(100.0, 30.0, 5.0),
            paths: 5_000,
            space: ParamSpace::default(),
            de: DESettings::default(),
            probe_shifts: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct MetricsOptions {
    /// Observed prices in percent of notional; model prices when absent.
    pub prices: Option<CalibrationTarget>,
}

impl RunConfig {
    pub fn toy() -> Self {
        RunConfig {
            pool: PoolConfig::toy(),
            deal: DealConfig::toy(),
            curve: default_curve(),
            index: IndexSource::Curve,
            params: EngineParams::toy_calibrated(),
            smoothing: SmoothingConfig::default(),
            pricing: PricingOptions::default(),
            calibration: CalibrationOptions::default(),
            metrics: MetricsOptions::default(),
        }
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|source| CliError::Io {
            path: path.display().to_string(),
            source,
        })?;
        serde_json::from_str(&text).map_err(|source| CliError::Parse {
            path: path.display().to_string(),
            source,
        })
    }
}
