//! End-to-end acceptance checks. Prints one PASS/FAIL line per criterion
//! and exits non-zero when any criterion fails.

mod common;

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use common::{read_json, snapshot, Workspace};
use serde_json::json;
use waterfall_core::assetpool::{base_scenario, simulate_pool, PoolConfig};
use waterfall_core::autodiff::{
    capped_payment, double_sigmoid_mask, grad_check, sigmoid_k, softplus, Mode, Scalar, ScalarFn,
    SmoothingConfig,
};
use waterfall_core::engines::{compose_engines, EngineParams, PARAM_NAMES};
use waterfall_core::metrics::{irr, z_spread};
use waterfall_core::pricing::{pv, DiscountCurve, IndexSource, PricingContext};
use waterfall_core::sampling::{correlated_pareto_interarrivals, ParetoSpec, RandomStream};
use waterfall_core::waterfall::{run_waterfall, Deal, DealConfig, Tranche};

type Outcome = Result<String, String>;

fn ensure(ok: bool, msg: impl Into<String>) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn toy_context(n_paths: usize, seed: u64) -> PricingContext {
    let base = base_scenario(&PoolConfig::toy()).unwrap();
    let deal = Deal::new(DealConfig::toy(), &base).unwrap();
    PricingContext::new(
        deal,
        base,
        DiscountCurve::flat(0.03),
        IndexSource::Curve,
        SmoothingConfig::default(),
        n_paths,
        seed,
    )
    .unwrap()
}

fn corr(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx).powi(2);
        syy += (b - my).powi(2);
    }
    sxy / (sxx * syy).sqrt()
}

fn sampler_moments() -> Outcome {
    let spec = ParetoSpec::new(4.6305).map_err(|e| e.to_string())?;
    let n = 1_000_000;
    let mut draws = RandomStream::new(42, 0).rng();
    let mut x: Vec<f64> = (0..n).map(|_| spec.inverse_cdf(draws.uniform())).collect();
    let mean = x.iter().sum::<f64>() / n as f64;
    x.sort_by(f64::total_cmp);
    let d = x
        .iter()
        .enumerate()
        .map(|(i, &v)| {
            let f = spec.cdf(v);
            (f - i as f64 / n as f64).max((i + 1) as f64 / n as f64 - f)
        })
        .fold(0.0, f64::max);
    // asymptotic Kolmogorov critical value at the 1% level
    let critical = 1.6276 / (n as f64).sqrt();
    ensure((mean - 1.0).abs() <= 0.01, format!("mean {mean:.5}"))?;
    ensure(d < critical, format!("KS D = {d:.2e} >= {critical:.2e}"))?;
    Ok(format!("mean {mean:.5}, KS D {d:.2e} < {critical:.2e}"))
}

fn arrival_correlation() -> Outcome {
    let arrivals = |rho: f64| -> Result<(Vec<f64>, Vec<f64>), String> {
        let (mut t2, mut t8) = (Vec::new(), Vec::new());
        for p in 0..100_000u64 {
            let tau = correlated_pareto_interarrivals(8, 4.6305, rho, &RandomStream::new(42, p))
                .map_err(|e| e.to_string())?;
            t2.push(tau[..2].iter().sum());
            t8.push(tau.iter().sum());
        }
        Ok((t2, t8))
    };
    let (a, b) = arrivals(0.0)?;
    let c0 = corr(&a, &b);
    let (a, b) = arrivals(1.0)?;
    let c1 = corr(&a, &b);
    ensure(
        (c0 - 0.5).abs() <= 0.02,
        format!("rho=0 correlation {c0:.4}"),
    )?;
    ensure(
        (c1 - 1.0).abs() < 1e-12,
        format!("rho=1 correlation {c1:.15}"),
    )?;
    Ok(format!("Corr(t2,t8) = {c0:.4} at rho=0, {c1:.12} at rho=1"))
}

struct PrimitiveSuite;

impl ScalarFn for PrimitiveSuite {
    fn eval<S: Scalar>(&self, x: &[S]) -> S {
        let cfg = SmoothingConfig {
            beta: 20.0,
            ..SmoothingConfig::default()
        };
        let tau = x[0] * 2.0 + x[1];
        let mut acc = S::constant(0.0);
        for i in 0..4 {
            acc += double_sigmoid_mask(tau, i as f64 + 0.5, 5.0) * x[2];
        }
        capped_payment(acc, x[1] * 3.0, Mode::Smooth, &cfg)
            + softplus(x[2] - x[0], 2.0)
            + sigmoid_k(x[1], 3.0) * x[0]
    }
}

fn gradient_fidelity() -> Outcome {
    let mut suite_err: f64 = 0.0;
    for x in [[0.4, 1.2, 0.9], [1.1, 0.3, 2.0], [0.2, 2.2, 0.5]] {
        suite_err =
            suite_err.max(grad_check(&PrimitiveSuite, &x, 1e-5).map_err(|e| e.to_string())?);
    }
    ensure(
        suite_err < 1e-3,
        format!("primitive suite error {suite_err:.2e}"),
    )?;

    let ctx = toy_context(10_000, 42);
    let calibrated = EngineParams {
        sigma: 0.3111,
        mu: 0.0,
        p: 0.5299,
        alpha: 2.0524,
        rho: 0.4868,
        w: 0.7985,
    };
    let mut worst: f64 = 0.0;
    for theta in [EngineParams::toy_calibrated(), calibrated] {
        let g = ctx.price_gradients(&theta).map_err(|e| e.to_string())?;
        for k in [0usize, 2, 3, 5] {
            let (mut up, mut dn) = (theta.to_array(), theta.to_array());
            let h = 1e-6 * up[k].abs();
            up[k] += h;
            dn[k] -= h;
            let pu = ctx
                .mean_prices_at(&EngineParams::from_array(up), Mode::Smooth)
                .map_err(|e| e.to_string())?;
            let pd = ctx
                .mean_prices_at(&EngineParams::from_array(dn), Mode::Smooth)
                .map_err(|e| e.to_string())?;
            for t in Tranche::ALL {
                let fd = (pu[t.index()] - pd[t.index()]) / (2.0 * h);
                let aad = g[t.index()].to_array()[k];
                // gradients of a tranche priced at zero are compared absolutely
                let err = (aad - fd).abs() / fd.abs().max(1e-6);
                ensure(
                    err < 1e-2,
                    format!("{t} d/d{}: aad {aad:.6e} fd {fd:.6e}", PARAM_NAMES[k]),
                )?;
                worst = worst.max(err);
            }
        }
    }
    Ok(format!(
        "max rel error {worst:.2e} at 1e4 paths, primitive suite {suite_err:.2e}"
    ))
}

fn conservation_and_seniority() -> Outcome {
    let ctx = toy_context(1, 42);
    let params = EngineParams::toy_calibrated();
    let fixings = ctx
        .index
        .fixings(&ctx.curve, &ctx.base.times, 0.5)
        .map_err(|e| e.to_string())?;
    let (sen, mez, jun) = (
        Tranche::Senior.index(),
        Tranche::Mezzanine.index(),
        Tranche::Junior.index(),
    );
    let mut worst: f64 = 0.0;
    for path in 0..1_000u64 {
        let cf = compose_engines(&ctx.base, &params, &ctx.smoothing, Mode::Exact, 42, path)
            .map_err(|e| e.to_string())?;
        let out = run_waterfall(&cf, &ctx.deal, &fixings, Mode::Exact, &ctx.smoothing)
            .map_err(|e| e.to_string())?;
        let mut prev = ctx.deal.config.notionals();
        for (j, (p, o)) in out.periods.iter().zip(&out.outstanding).enumerate() {
            let err = (p.allocated() - p.available).abs() / p.available.max(1.0);
            worst = worst.max(err);
            ensure(
                err <= 1e-9,
                format!("path {path} period {j}: conservation error {err:.2e}"),
            )?;
            for i in 0..4 {
                ensure(
                    o[i] <= prev[i],
                    format!("path {path} period {j}: balance {i} rose"),
                )?;
            }
            ensure(
                p.principal[jun] == 0.0 || (o[sen] <= 1e-9 && o[mez] <= 1e-9),
                format!("path {path} period {j}: junior principal with a senior class outstanding"),
            )?;
            prev = *o;
        }
    }
    Ok(format!(
        "1000 paths, max relative conservation error {worst:.1e}"
    ))
}

fn mode_consistency() -> Outcome {
    let ctx = toy_context(1, 42);
    let fixings = ctx
        .index
        .fixings(&ctx.curve, &ctx.base.times, 0.5)
        .map_err(|e| e.to_string())?;
    let run = |mode| {
        run_waterfall(&ctx.base.amounts, &ctx.deal, &fixings, mode, &ctx.smoothing)
            .map_err(|e| e.to_string())
    };
    let (exact, smooth) = (run(Mode::Exact)?, run(Mode::Smooth)?);
    let mut worst: f64 = 0.0;
    for t in Tranche::ALL {
        let n = ctx.deal.config.tranche(t).notional;
        let e = pv(&exact.flows(t), &ctx.base.times, &ctx.curve);
        let s = pv(&smooth.flows(t), &ctx.base.times, &ctx.curve);
        let bp = 1e4 * (e - s).abs() / n;
        ensure(bp < 5.0, format!("{t}: {bp:.3} bp"))?;
        worst = worst.max(bp);
    }
    Ok(format!("max gap {worst:.4} bp of notional"))
}

/// Runs a CLI calibration and returns the report.
fn cli_calibrate(
    ws: &Workspace,
    targets: serde_json::Value,
    paths: usize,
) -> Result<serde_json::Value, String> {
    ws.edit(|v| {
        v["calibration"]["targets"] = targets;
        v["pricing"]["paths"] = json!(paths);
    });
    let out = ws.out("calibration");
    let o = ws.run("calibrate", &out, &["--paths", &paths.to_string()]);
    ensure(
        o.status.success(),
        String::from_utf8_lossy(&o.stderr).into_owned(),
    )?;
    Ok(read_json(&out.join("calibration.json")))
}

fn calibration_round_trip() -> Outcome {
    let known = EngineParams {
        sigma: 0.25,
        mu: 0.0,
        p: 0.6,
        alpha: 2.5,
        rho: 0.4,
        w: 0.8,
    };
    let prices = toy_context(5_000, 42)
        .mean_prices_at(&known, Mode::Smooth)
        .map_err(|e| e.to_string())?;
    let ws = Workspace::new();
    let r = cli_calibrate(
        &ws,
        json!({"senior": prices[0], "mezzanine": prices[1], "junior": prices[2]}),
        5_000,
    )?;
    let err = r["max_error"].as_f64().unwrap_or(f64::INFINITY);
    let gens = r["generations"].as_u64().unwrap_or(u64::MAX);
    ensure(err <= 0.02, format!("max error {err:.4}"))?;
    ensure(gens <= 500, format!("{gens} generations"))?;
    Ok(format!(
        "max error {err:.4} after {gens} generations at 5000 paths"
    ))
}

fn base_scenario_plausibility() -> Outcome {
    let config = PoolConfig::toy();
    let total = base_scenario(&config).map_err(|e| e.to_string())?.total();
    ensure(
        (185.0..=227.0).contains(&total),
        format!("base total {total:.3}"),
    )?;
    let n = 100_000;
    let (mut s, mut s2) = (0.0, 0.0);
    for p in 0..n {
        let x = simulate_pool(&config, 42, p)
            .map_err(|e| e.to_string())?
            .total();
        s += x;
        s2 += x * x;
    }
    let mean = s / n as f64;
    let se = ((s2 / n as f64 - mean * mean) / n as f64).sqrt();
    ensure(
        (mean - total).abs() <= 3.0 * se,
        format!("simulated mean {mean:.4} vs {total:.4}, se {se:.4}"),
    )?;
    Ok(format!(
        "base total {total:.3}, simulated {mean:.3} ({:.2} se)",
        (mean - total).abs() / se
    ))
}

fn sensitivity_signs() -> Outcome {
    let ws = Workspace::new();
    let r = cli_calibrate(
        &ws,
        json!({"senior": 100.0, "mezzanine": 30.0, "junior": 5.0}),
        2_000,
    )?;
    let params = r["params"].clone();
    ws.edit(|v| v["params"] = params.clone());
    let out = ws.out("sens");
    let o = ws.run("sensitivities", &out, &["--paths", "20000"]);
    ensure(
        o.status.success(),
        String::from_utf8_lossy(&o.stderr).into_owned(),
    )?;
    let s = read_json(&out.join("sensitivities.json"));
    let get = |t: &str, key: &str| s["tranches"][t][key].as_f64().unwrap_or(f64::NAN);
    let dw = |t: &str| {
        s["tranches"][t]["gradients"]["w"]
            .as_f64()
            .unwrap_or(f64::NAN)
    };
    let checks = [
        ("senior DV01 > 0", get("senior", "dv01") > 0.0),
        ("mezzanine DV01 < 0", get("mezzanine", "dv01") < 0.0),
        ("senior BV01 > 0", get("senior", "bv01") > 0.0),
        ("mezzanine BV01 > 0", get("mezzanine", "bv01") > 0.0),
        ("senior dP/dw > 0", dw("senior") > 0.0),
        ("mezzanine dP/dw > 0", dw("mezzanine") > 0.0),
    ];
    let detail = format!(
        "calibrated max error {:.4}; DV01 {:+.4}/{:+.4}, BV01 {:+.4}/{:+.4}, dP/dw {:+.2}/{:+.2}",
        r["max_error"].as_f64().unwrap_or(f64::NAN),
        get("senior", "dv01"),
        get("mezzanine", "dv01"),
        get("senior", "bv01"),
        get("mezzanine", "bv01"),
        dw("senior"),
        dw("mezzanine"),
    );
    for (name, ok) in checks {
        ensure(ok, format!("{name} fails: {detail}"))?;
    }
    Ok(detail)
}

fn metric_inversions() -> Outcome {
    let flows = [4.0, 4.0, 4.0, 104.0];
    let times = [0.5, 1.3, 2.0, 3.7];
    let mut worst: f64 = 0.0;
    for r in [-0.2, 0.0, 0.031, 0.5, 3.0] {
        let price: f64 = flows
            .iter()
            .zip(&times)
            .map(|(c, t)| c * (1.0 + r).powf(-t))
            .sum();
        let got = irr(&flows, &times, price).map_err(|e| e.to_string())?;
        worst = worst.max((got - r).abs());
    }
    for (rate, s) in [(0.02, 0.0), (0.03, 0.015), (-0.005, 0.4)] {
        let d: Vec<f64> = times.iter().map(|t| (-rate * t).exp()).collect();
        let price: f64 = flows
            .iter()
            .zip(&times)
            .map(|(c, t)| c * (-(rate + s) * t).exp())
            .sum();
        let got = z_spread(&flows, &times, &d, price).map_err(|e| e.to_string())?;
        worst = worst.max((got - s).abs());
    }
    let par = irr(&[5.0, 105.0], &[1.0, 2.0], 100.0).map_err(|e| e.to_string())?;
    worst = worst.max((par - 0.05).abs());
    ensure(worst <= 1e-9, format!("worst inversion error {worst:.2e}"))?;
    Ok(format!("worst inversion error {worst:.1e}"))
}

fn determinism() -> Outcome {
    let ws = Workspace::new();
    ws.edit(|v| {
        v["pricing"]["paths"] = json!(2_000);
        v["calibration"]["paths"] = json!(300);
        v["calibration"]["de"]["population"] = json!(8);
        v["calibration"]["de"]["max_generations"] = json!(4);
    });
    let commands = [
        "simulate",
        "price",
        "sensitivities",
        "calibrate",
        "timelapse",
        "metrics",
    ];
    let run_all = |name: &str, workers: &str| -> Result<Vec<(String, Vec<u8>)>, String> {
        let out = ws.out(name);
        for c in commands {
            let o = ws.run(c, &out, &["--workers", workers]);
            ensure(
                o.status.success(),
                format!("{c}: {}", String::from_utf8_lossy(&o.stderr)),
            )?;
        }
        Ok(snapshot(&out))
    };
    let a = run_all("w1", "1")?;
    let b = run_all("w1-again", "1")?;
    let c = run_all("w4", "4")?;
    ensure(a == b, "rerun differs")?;
    ensure(a == c, "worker count changes the output")?;
    Ok(format!(
        "{} artifacts identical across reruns and 1 vs 4 workers",
        a.len()
    ))
}

struct Criterion {
    name: &'static str,
    limit: Duration,
    run: fn() -> Outcome,
}

fn main() -> ExitCode {
    let criteria = [
        Criterion {
            name: "sampler moments",
            limit: Duration::from_secs(10),
            run: sampler_moments,
        },
        Criterion {
            name: "arrival-time correlation",
            limit: Duration::from_secs(30),
            run: arrival_correlation,
        },
        Criterion {
            name: "gradient fidelity",
            limit: Duration::from_secs(120),
            run: gradient_fidelity,
        },
        Criterion {
            name: "conservation and seniority",
            limit: Duration::from_secs(30),
            run: conservation_and_seniority,
        },
        Criterion {
            name: "mode consistency",
            limit: Duration::from_secs(10),
            run: mode_consistency,
        },
        Criterion {
            name: "calibration round trip",
            limit: Duration::from_secs(900),
            run: calibration_round_trip,
        },
        Criterion {
            name: "base-scenario plausibility",
            limit: Duration::MAX,
            run: base_scenario_plausibility,
        },
        Criterion {
            name: "sensitivity signs",
            limit: Duration::MAX,
            run: sensitivity_signs,
        },
        Criterion {
            name: "metric inversions",
            limit: Duration::MAX,
            run: metric_inversions,
        },
        Criterion {
            name: "determinism",
            limit: Duration::MAX,
            run: determinism,
        },
    ];
    let filter: Vec<String> = std::env::args()
        .skip(1)
        .filter(|a| !a.starts_with('-'))
        .collect();
    let mut failed = 0;
    for (i, c) in criteria.iter().enumerate() {
        let id = (i + 1).to_string();
        if !filter.is_empty()
            && !filter
                .iter()
                .any(|f| *f == id || c.name.contains(f.as_str()))
        {
            continue;
        }
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(c.run)).unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into()))
        });
        let elapsed = start.elapsed();
        let outcome = match outcome {
            Ok(d) if elapsed > c.limit => {
                Err(format!("{d}; took {elapsed:.1?}, limit {:?}", c.limit))
            }
            other => other,
        };
        let (status, detail) = match &outcome {
            Ok(d) => ("PASS", d),
            Err(d) => ("FAIL", d),
        };
        println!(
            "criterion {id:>2} {status}: {} ({detail}) [{:.1} s]",
            c.name,
            elapsed.as_secs_f64()
        );
        failed += outcome.is_err() as u32;
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} acceptance criteria failed");
        ExitCode::FAILURE
    }
}
