use waterfall_core::assetpool::{base_scenario, PoolConfig};
use waterfall_core::autodiff::{Mode, SmoothingConfig};
use waterfall_core::calibration::*;
use waterfall_core::engines::EngineParams;
use waterfall_core::pricing::{DiscountCurve, IndexSource, PricingContext};
use waterfall_core::waterfall::{Deal, DealConfig, Tranche};

fn context(n_paths: usize) -> PricingContext {
    let base = base_scenario(&PoolConfig::toy()).unwrap();
    let deal = Deal::new(DealConfig::toy(), &base).unwrap();
    PricingContext::new(
        deal,
        base,
        DiscountCurve::flat(0.03),
        IndexSource::Curve,
        SmoothingConfig::default(),
        n_paths,
        7,
    )
    .unwrap()
}

fn rosenbrock(x: &[f64]) -> f64 {
    x.windows(2)
        .map(|w| 100.0 * (w[1] - w[0] * w[0]).powi(2) + (1.0 - w[0]).powi(2))
        .sum()
}

#[test]
fn rosenbrock_is_solved() {
    let settings = DESettings {
        tolerance: 1e-7,
        stall_generations: 500,
        ..DESettings::default()
    };
    let r = differential_evolution(rosenbrock, &[-2.0, -2.0], &[2.0, 2.0], &settings).unwrap();
    assert!(r.value < 1e-6, "f = {}", r.value);
    assert!(r.generations <= 500);
    assert!(r.converged);
    assert!((r.best[0] - 1.0).abs() < 1e-2 && (r.best[1] - 1.0).abs() < 2e-2);
    for w in r.history.windows(2) {
        assert!(w[1] <= w[0]);
    }
    assert_eq!(r.history.len(), r.generations + 1);
}

#[test]
fn de_is_reproducible_and_stays_in_bounds() {
    let lower = [-1.0, 0.5, 3.0];
    let upper = [1.0, 0.5, 7.0];
    let seen = std::sync::Mutex::new(Vec::new());
    let f = |x: &[f64]| {
        seen.lock().unwrap().push(x.to_vec());
        x.iter().map(|v| (v - 2.0).powi(2)).sum::<f64>()
    };
    let settings = DESettings {
        max_generations: 60,
        tolerance: 0.0,
        ..DESettings::default()
    };
    let a = differential_evolution(f, &lower, &upper, &settings).unwrap();
    for x in seen.lock().unwrap().iter() {
        for d in 0..3 {
            assert!(x[d] >= lower[d] && x[d] <= upper[d], "{x:?}");
        }
    }
    let b = differential_evolution(f, &lower, &upper, &settings).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.best[1], 0.5);
    assert!(!a.converged);
}

#[test]
fn haircut_only_calibration() {
    let ctx = context(300);
    let truth = EngineParams {
        w: 0.8,
        ..EngineParams::toy_calibrated()
    };
    let prices = ctx.mean_prices_at(&truth, Mode::Exact).unwrap();
    let targets = CalibrationTarget::from_prices(prices, &[Tranche::Senior, Tranche::Mezzanine]);
    let mut space = ParamSpace::default();
    for (name, v) in [
        ("sigma", truth.sigma),
        ("p", truth.p),
        ("alpha", truth.alpha),
        ("rho", truth.rho),
    ] {
        space.pin(name, v).unwrap();
    }
    let settings = DESettings {
        population: 8,
        tolerance: 1e-4,
        max_generations: 100,
        ..DESettings::default()
    };
    let report = calibrate(&ctx, &targets, &space, &settings, Mode::Exact).unwrap();
    assert!(
        (report.params.w - 0.8).abs() < 1e-3,
        "w = {}",
        report.params.w
    );
    assert!(report.max_error <= 1e-4);
    assert!(!report.warning);
    assert_eq!(report.residuals.len(), 2);
}

#[test]
fn infeasible_target_raises_the_warning() {
    let ctx = context(100);
    let targets = CalibrationTarget::new(100.0, 30.0, 150.0);
    let settings = DESettings {
        population: 8,
        max_generations: 10,
        ..DESettings::default()
    };
    let report = calibrate(
        &ctx,
        &targets,
        &ParamSpace::default(),
        &settings,
        Mode::Exact,
    )
    .unwrap();
    assert!(report.warning);
    assert!(report.max_error > 10.0);
    let space = ParamSpace::default();
    let p = report.params.to_array();
    let (lo, hi) = (space.lower.to_array(), space.upper.to_array());
    for d in 0..6 {
        assert!(p[d] >= lo[d] && p[d] <= hi[d]);
    }
}

#[test]
fn objective_is_deterministic() {
    let targets = CalibrationTarget::new(100.0, 30.0, 5.0);
    let params = EngineParams::toy_calibrated();
    let a = objective(&params, &targets, &context(200), Mode::Smooth);
    let b = objective(&params, &targets, &context(200), Mode::Smooth);
    assert_eq!(a, b);
    assert!(a.is_finite() && a >= 0.0);
}

#[test]
fn invalid_parameters_score_the_penalty() {
    let targets = CalibrationTarget::new(100.0, 30.0, 5.0);
    let bad = EngineParams {
        alpha: 0.9,
        ..EngineParams::toy_calibrated()
    };
    assert_eq!(
        objective(&bad, &targets, &context(10), Mode::Exact),
        PENALTY
    );
}

#[test]
fn bad_inputs_are_rejected() {
    let ctx = context(10);
    let settings = DESettings::default();
    let space = ParamSpace::default();
    assert!(calibrate(
        &ctx,
        &CalibrationTarget::new(0.0, 30.0, 5.0),
        &space,
        &settings,
        Mode::Exact
    )
    .is_err());
    let tiny = DESettings {
        population: 3,
        ..settings
    };
    assert!(calibrate(
        &ctx,
        &CalibrationTarget::new(100.0, 30.0, 5.0),
        &space,
        &tiny,
        Mode::Exact
    )
    .is_err());
    assert!(differential_evolution(rosenbrock, &[1.0], &[0.0], &DESettings::default()).is_err());
}
