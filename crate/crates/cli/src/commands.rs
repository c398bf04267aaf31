use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use log::info;
use serde::Serialize;
use waterfall_core::assetpool::{base_scenario, simulate_pool};
use waterfall_core::autodiff::Mode;
use waterfall_core::calibration::{calibrate, robustness_probe, ProbeResult};
use waterfall_core::engines::{CashFlowSchedule, EngineParams};
use waterfall_core::metrics::{compute_metrics, null_scenario_inputs};
use waterfall_core::pricing::{price_distribution, PricingContext};
use waterfall_core::waterfall::{Deal, Tranche};

use crate::config::RunConfig;
use crate::error::CliError;

/// Settings shared by every command after flags are applied.
pub struct Run {
    pub config: RunConfig,
    pub out_dir: PathBuf,
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io {
        path: path.display().to_string(),
        source,
    }
}

impl Run {
    fn path(&self, name: &str) -> PathBuf {
        self.out_dir.join(name)
    }

    fn write_json<T: Serialize>(&self, name: &str, value: &T) -> Result<PathBuf, CliError> {
        let path = self.path(name);
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        fs::write(&path, text).map_err(io_err(&path))?;
        info!("wrote {}", path.display());
        Ok(path)
    }

    fn csv_writer(&self, name: &str) -> Result<(csv::Writer<fs::File>, PathBuf), CliError> {
        let path = self.path(name);
        let file = fs::File::create(&path).map_err(io_err(&path))?;
        Ok((csv::Writer::from_writer(file), path))
    }

    fn base(&self) -> Result<CashFlowSchedule, CliError> {
        Ok(base_scenario(&self.config.pool)?)
    }

    fn context(&self, n_paths: usize) -> Result<PricingContext, CliError> {
        let c = &self.config;
        let base = self.base()?;
        let deal = Deal::new(c.deal.clone(), &base)?;
        Ok(PricingContext::new(
            deal,
            base,
            c.curve.clone(),
            c.index.clone(),
            c.smoothing,
            n_paths,
            c.pricing.seed,
        )?)
    }

    fn mode(&self) -> Mode {
        self.config.pricing.mode
    }
}

fn write_schedule(
    w: &mut csv::Writer<fs::File>,
    path: Option<usize>,
    s: &CashFlowSchedule,
) -> Result<(), CliError> {
    for (j, (t, a)) in s.times.iter().zip(&s.amounts).enumerate() {
        match path {
            Some(p) => w.write_record([
                p.to_string(),
                (j + 1).to_string(),
                t.to_string(),
                a.to_string(),
            ])?,
            None => w.write_record([(j + 1).to_string(), t.to_string(), a.to_string()])?,
        }
    }
    Ok(())
}

pub fn simulate(run: &Run) -> Result<Vec<PathBuf>, CliError> {
    let c = &run.config;
    let (mut w, paths_file) = run.csv_writer("pool_paths.csv")?;
    w.write_record(["path", "period", "time", "amount"])?;
    for p in 0..c.pricing.simulate_paths {
        let s = simulate_pool(&c.pool, c.pricing.seed, p as u64)?;
        write_schedule(&mut w, Some(p), &s)?;
    }
    w.flush().map_err(io_err(&paths_file))?;

    let (mut w, base_file) = run.csv_writer("base_scenario.csv")?;
    w.write_record(["period", "time", "amount"])?;
    write_schedule(&mut w, None, &run.base()?)?;
    w.flush().map_err(io_err(&base_file))?;
    Ok(vec![paths_file, base_file])
}

#[derive(Serialize)]
struct Gradients {
    sigma: f64,
    p: f64,
    alpha: f64,
    rho: f64,
    w: f64,
}

#[derive(Serialize)]
struct TrancheOut {
    price: f64,
    se: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    gradients: Option<Gradients>,
    #[serde(skip_serializing_if = "Option::is_none")]
    dv01: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    bv01: Option<f64>,
}

#[derive(Serialize)]
struct PriceOut<'a> {
    n_paths: usize,
    seed: u64,
    mode: Mode,
    params: &'a EngineParams,
    tranches: BTreeMap<Tranche, TrancheOut>,
}

fn price_out<'a>(
    report: &waterfall_core::pricing::PriceReport,
    params: &'a EngineParams,
) -> PriceOut<'a> {
    let tranches = report
        .tranches
        .iter()
        .map(|t| {
            (
                t.tranche,
                TrancheOut {
                    price: t.price,
                    se: t.std_error,
                    gradients: t.gradients.map(|g| Gradients {
                        sigma: g.sigma,
                        p: g.p,
                        alpha: g.alpha,
                        rho: g.rho,
                        w: g.w,
                    }),
                    dv01: t.dv01,
                    bv01: t.bv01,
                },
            )
        })
        .collect();
    PriceOut {
        n_paths: report.n_paths,
        seed: report.seed,
        mode: report.mode,
        params,
        tranches,
    }
}

pub fn price(run: &Run) -> Result<Vec<PathBuf>, CliError> {
    let c = &run.config;
    let ctx = run.context(c.pricing.paths)?;
    let report = ctx.price(&c.params, run.mode())?;
    let mut files = vec![run.write_json("price_report.json", &price_out(&report, &c.params))?];
    for t in &report.tranches {
        let h = price_distribution(&t.samples, c.pricing.bins)?;
        let (mut w, file) = run.csv_writer(&format!("histogram_{}.csv", t.tranche))?;
        w.write_record(["bin_lo", "bin_hi", "count"])?;
        for (i, count) in h.counts.iter().enumerate() {
            w.write_record([
                h.edges[i].to_string(),
                h.edges[i + 1].to_string(),
                count.to_string(),
            ])?;
        }
        w.flush().map_err(io_err(&file))?;
        files.push(file);
    }
    Ok(files)
}

pub fn sensitivities(run: &Run) -> Result<Vec<PathBuf>, CliError> {
    let c = &run.config;
    let ctx = run.context(c.pricing.paths)?;
    let report = ctx.sensitivities(&c.params, run.mode(), c.pricing.dv01)?;
    Ok(vec![run.write_json(
        "sensitivities.json",
        &price_out(&report, &c.params),
    )?])
}

#[derive(Serialize)]
struct ResidualOut {
    target: f64,
    model: f64,
    residual: f64,
}

#[derive(Serialize)]
struct CalibrationOut {
    params: EngineParams,
    max_error: f64,
    residuals: BTreeMap<Tranche, ResidualOut>,
    generations: usize,
    evaluations: usize,
    warning: bool,
    calibration_paths: usize,
    report_paths: usize,
    /// Prices at the calibrated parameters on the reporting path count.
    repriced: BTreeMap<Tranche, f64>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    probe: Vec<ProbeResult>,
}

pub fn calibrate_cmd(run: &Run) -> Result<Vec<PathBuf>, CliError> {
    let c = &run.config;
    let cal = &c.calibration;
    let ctx = run.context(cal.paths)?;
    let report = calibrate(&ctx, &cal.targets, &cal.space, &cal.de, run.mode())?;
    let probe = if cal.probe_shifts.is_empty() {
        Vec::new()
    } else {
        robustness_probe(
            &ctx,
            &cal.targets,
            &cal.space,
            &cal.de,
            run.mode(),
            &report.params,
            &cal.probe_shifts,
        )?
    };
    let full = run.context(c.pricing.paths)?;
    let prices = full.mean_prices_at(&report.params, run.mode())?;
    let out = CalibrationOut {
        params: report.params,
        max_error: report.max_error,
        residuals: report
            .residuals
            .iter()
            .map(|r| {
                (
                    r.tranche,
                    ResidualOut {
                        target: r.target,
                        model: r.model,
                        residual: r.residual,
                    },
                )
            })
            .collect(),
        generations: report.generations,
        evaluations: report.evaluations,
        warning: report.warning,
        calibration_paths: cal.paths,
        report_paths: c.pricing.paths,
        repriced: Tranche::ALL
            .iter()
            .map(|&t| (t, prices[t.index()]))
            .collect(),
        probe,
    };
    Ok(vec![run.write_json("calibration.json", &out)?])
}

pub fn timelapse(run: &Run) -> Result<Vec<PathBuf>, CliError> {
    let c = &run.config;
    let ctx = run.context(c.pricing.paths)?;
    let dates = if c.pricing.eval_dates.is_empty() {
        std::iter::once(0.0)
            .chain(ctx.base.times.iter().copied())
            .collect()
    } else {
        c.pricing.eval_dates.clone()
    };
    let profile = ctx.forward_prices(&c.params, run.mode(), &dates)?;
    let (mut w, file) = run.csv_writer("timelapse.csv")?;
    w.write_record(["date", "tranche", "price"])?;
    for p in &profile.points {
        w.write_record([
            p.date.to_string(),
            p.tranche.to_string(),
            p.price.to_string(),
        ])?;
    }
    w.flush().map_err(io_err(&file))?;
    Ok(vec![file])
}

#[derive(Serialize)]
struct MetricsOut {
    irr: Option<f64>,
    z_spread: Option<f64>,
    annuity: f64,
    asw: f64,
    price: f64,
    null_price: f64,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    flags: Vec<String>,
}

pub fn metrics(run: &Run) -> Result<Vec<PathBuf>, CliError> {
    let c = &run.config;
    let ctx = run.context(c.pricing.paths)?;
    // Tranches without an observed price are skipped.
    let prices: [f64; 4] = match &c.metrics.prices {
        Some(p) => Tranche::ALL.map(|t| p.get(t).unwrap_or(f64::NAN)),
        None => ctx.mean_prices_at(&c.params, run.mode())?,
    };
    let inputs = null_scenario_inputs(
        &ctx.deal,
        &ctx.base,
        &c.curve,
        &c.index,
        prices,
        c.smoothing.eps,
    )?;
    let mut out = BTreeMap::new();
    for (t, m) in Tranche::ALL.iter().zip(&inputs) {
        if !m.price.is_finite() {
            continue;
        }
        let r = compute_metrics(*t, m)?;
        out.insert(
            *t,
            MetricsOut {
                irr: r.irr,
                z_spread: r.z_spread,
                annuity: r.annuity,
                asw: r.asw,
                price: m.price,
                null_price: m.null_price,
                flags: r.flags,
            },
        );
    }
    Ok(vec![run.write_json("metrics.json", &out)?])
}
