use waterfall_core::assetpool::*;

#[test]
fn simulated_mean_matches_base_scenario_per_period() {
    let config = PoolConfig::toy();
    let base = base_scenario(&config).unwrap();
    let n = 4_000;
    let periods = config.n_periods();
    let mut sum = vec![0.0; periods];
    let mut sq = vec![0.0; periods];
    for p in 0..n {
        let s = simulate_pool(&config, 17, p).unwrap();
        for j in 0..periods {
            sum[j] += s.amounts[j];
            sq[j] += s.amounts[j] * s.amounts[j];
        }
    }
    for j in 0..periods {
        let mean = sum[j] / n as f64;
        let var = sq[j] / n as f64 - mean * mean;
        let se = (var / n as f64).sqrt();
        assert!(
            (mean - base.amounts[j]).abs() < 4.5 * se + 1e-9,
            "period {j}: simulated {mean} analytic {} se {se}",
            base.amounts[j]
        );
    }
}

#[test]
fn base_total_is_plausible() {
    let total = base_scenario(&PoolConfig::toy()).unwrap().total();
    assert!((185.0..=227.0).contains(&total), "{total}");
}

#[test]
fn rent_only_annuity() {
    // delta = 1, no fee, no sale before the horizon
    let config = PoolConfig {
        asset_types: vec![AssetTypeSpec {
            v0: 4.0,
            lambda_rate: 1e-12,
            delta: 1.0,
            count: 3,
        }],
        rent_yield: 0.06,
        collection_fee: 0.0,
        horizon: 5.0,
        rho: 0.0,
        period: 0.5,
        sale_offset: 0.5,
    };
    let s = simulate_pool(&config, 1, 0).unwrap();
    let sales = 3.0 * 4.0;
    let rent: f64 = s.total() - sales;
    // rent is received in every period before the forced final sale
    let expected = 3.0 * 4.0 * 0.06 * (5.0 - 0.5);
    assert!((rent - expected).abs() < 1e-9, "{rent} vs {expected}");
}

#[test]
fn correlation_does_not_move_the_mean_but_widens_the_spread() {
    let mut lo = PoolConfig::toy();
    lo.rho = 0.0;
    let mut hi = PoolConfig::toy();
    hi.rho = 0.9;
    let totals = |c: &PoolConfig| -> Vec<f64> {
        (0..2_000)
            .map(|p| simulate_pool(c, 23, p).unwrap().amounts[..6].iter().sum())
            .collect()
    };
    let stats = |x: Vec<f64>| {
        let n = x.len() as f64;
        let m = x.iter().sum::<f64>() / n;
        (
            m,
            (x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / n).sqrt(),
        )
    };
    let (m0, s0) = stats(totals(&lo));
    let (m1, s1) = stats(totals(&hi));
    assert!((m0 - m1).abs() < 4.0 * (s0 * s0 + s1 * s1).sqrt() / (2_000f64).sqrt());
    assert!(s1 > 2.0 * s0, "spread {s0} vs {s1}");
}
