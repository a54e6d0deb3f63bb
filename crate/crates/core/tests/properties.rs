mod common;

use std::collections::BTreeMap;

use mincap::estimator::rho_hat;
use mincap::oracle::NodeHoldings;
use mincap::risk::rho_exact;
use mincap::rng::{stream, stream_id, Purpose};
use mincap::sampler::{build_bank, sample_tilted};
use mincap::search::GridSpec;
use mincap::vcbound::{certified_ratio, empirical_shatter, minimal_sample_size, log_deviation_bound};
use mincap::weights::strategy_from_params;
use mincap::{plan_samples, run_search, BoundVariant, MarketScenario, Sign, StrategyParams};
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::Rng;
use statrs::distribution::{ChiSquared, ContinuousCDF};

use common::{gbm_config, tree_fixture};

fn node_rule(levels: Vec<Vec<f64>>) -> NodeHoldings {
    let (cfg, _) = tree_fixture();
    NodeHoldings {
        tree: cfg.scenario.as_tree().unwrap().clone(),
        levels,
    }
}

fn holdings_strategy() -> impl Strategy<Value = Vec<Vec<f64>>> {
    (-0.5f64..1.0, -0.5f64..1.0, -0.5f64..1.0).prop_map(|(a, b, c)| vec![vec![a], vec![b, c]])
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn rho_is_cash_invariant(h in holdings_strategy(), w0 in -5.0f64..5.0) {
        let (cfg, _) = tree_fixture();
        let rule = node_rule(h);
        let base = rho_exact(&cfg.spec, &cfg.scenario, &rule, 0.0).unwrap();
        let shifted = rho_exact(&cfg.spec, &cfg.scenario, &rule, w0).unwrap();
        prop_assert!((shifted - (base - w0)).abs() <= 1e-12);
    }

    #[test]
    fn rho_is_monotone_in_capital(h in holdings_strategy(), w0 in -5.0f64..5.0, extra in 0.0f64..5.0) {
        let (cfg, _) = tree_fixture();
        let rule = node_rule(h);
        let low = rho_exact(&cfg.spec, &cfg.scenario, &rule, w0).unwrap();
        let high = rho_exact(&cfg.spec, &cfg.scenario, &rule, w0 + extra).unwrap();
        prop_assert!(high <= low + 1e-12);
    }

    #[test]
    fn rho_is_convex_in_holdings(h1 in holdings_strategy(), h2 in holdings_strategy(), lam in 0.0f64..1.0) {
        let (cfg, _) = tree_fixture();
        let mix: Vec<Vec<f64>> = h1.iter().zip(&h2)
            .map(|(a, b)| a.iter().zip(b).map(|(x, y)| lam * x + (1.0 - lam) * y).collect())
            .collect();
        let r = |h: Vec<Vec<f64>>| rho_exact(&cfg.spec, &cfg.scenario, &node_rule(h), 0.0).unwrap();
        let lhs = r(mix);
        let rhs = lam * r(h1) + (1.0 - lam) * r(h2);
        prop_assert!(lhs <= rhs + 1e-12);
    }

    #[test]
    fn parametric_holdings_respect_bounds(s in prop::collection::vec(-1e6f64..1e6, 3), seed in 0u64..1000) {
        let cfg = gbm_config();
        let w = cfg.weights().unwrap();
        let path = cfg.scenario.sample_path(&mut stream(seed, 0));
        let xi = strategy_from_params(&w, &StrategyParams::new(s, cfg.eta), &path).unwrap();
        for (t, x) in xi.iter().enumerate() {
            let (a, b) = cfg.scenario.bounds_at(t, path.prefix(t));
            prop_assert!(*x >= a && *x <= b);
        }
    }

    #[test]
    fn minimal_sample_size_is_minimal(x in 0.005f64..0.5, delta in 0.001f64..0.5, v in 2usize..6) {
        for variant in [BoundVariant::Devroye, BoundVariant::Basic] {
            let n = minimal_sample_size(x, delta, v, variant);
            prop_assert!(log_deviation_bound(n, x, v, variant) <= delta.ln());
            prop_assert!(n == 1 || log_deviation_bound(n - 1, x, v, variant) > delta.ln());
            prop_assert!(certified_ratio(n, delta, v, variant) <= x * (1.0 + 1e-9));
        }
    }

    #[test]
    fn sample_size_grows_with_precision_and_confidence(
        x in 0.01f64..0.5, shrink in 0.1f64..1.0, delta in 0.001f64..0.5, dshrink in 0.1f64..1.0,
    ) {
        let v = 4;
        let n = minimal_sample_size(x, delta, v, BoundVariant::Devroye);
        prop_assert!(minimal_sample_size(x * shrink, delta, v, BoundVariant::Devroye) >= n);
        prop_assert!(minimal_sample_size(x, delta * dshrink, v, BoundVariant::Devroye) >= n);
    }
}

fn binomial(n: u64, k: u64) -> u64 {
    if k > n {
        return 0;
    }
    (0..k).fold(1, |acc, j| acc * (n - j) / (j + 1))
}

fn points(dim: usize, n: usize, positive_first: bool) -> impl Strategy<Value = Vec<Vec<f64>>> {
    prop::collection::vec(prop::collection::vec(-1.0f64..1.0, dim), n).prop_map(move |mut pts| {
        if positive_first {
            for p in &mut pts {
                p[0] = p[0].abs() + 0.05;
            }
        }
        pts
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn shatter_respects_sauer(dim in 1usize..=3, pts in (1usize..=8).prop_flat_map(|n| points(3, n, false))) {
        let pts: Vec<Vec<f64>> = pts.into_iter().map(|p| p[..dim].to_vec()).collect();
        let n = pts.len() as u64;
        let count = empirical_shatter(&pts).unwrap() as u64;
        prop_assert!(count <= 1 << n);
        let sauer: u64 = (0..=dim as u64).map(|k| binomial(n, k)).sum();
        prop_assert!(count <= sauer, "{count} > {sauer}");
    }

    #[test]
    fn shatter_matches_cover_count(dim in 1usize..=3, pts in (1usize..=8).prop_flat_map(|n| points(3, n, true))) {
        // points in general position inside an open halfspace
        let pts: Vec<Vec<f64>> = pts.into_iter().map(|p| p[..dim].to_vec()).collect();
        let n = pts.len() as u64;
        let cover: u64 = 2 * (0..dim as u64).map(|k| binomial(n - 1, k)).sum::<u64>();
        prop_assert_eq!(empirical_shatter(&pts).unwrap() as u64, cover);
    }
}

#[test]
fn tree_sampler_matches_exact_tilted_law() {
    let (cfg, _) = tree_fixture();
    let w = cfg.weights().unwrap();
    let paths = cfg.scenario.enumerate_paths().unwrap();
    let horizon = cfg.scenario.horizon();
    for (i, sign) in w.nonzero_pairs() {
        let d = w.measure(i).normalizer(sign);
        let mut expected = BTreeMap::new();
        for (k, (path, p)) in paths.iter().enumerate() {
            for t in 0..horizon {
                let mass = p * sign.part(w.v(i, path, t).unwrap()) / d;
                if mass > 0.0 {
                    expected.insert((k, t), mass);
                }
            }
        }
        let n = 100_000;
        let mut rng = stream(17, stream_id(Purpose::Test, i, sign, 0));
        let draws = sample_tilted(&w, i, sign, cfg.eta, n, &mut rng).unwrap();
        let mut observed: BTreeMap<(usize, usize), f64> = BTreeMap::new();
        for s in &draws {
            let k = paths.iter().position(|(p, _)| p.drivers == s.path.drivers).unwrap();
            *observed.entry((k, s.t)).or_default() += 1.0;
        }
        assert!(observed.keys().all(|key| expected.contains_key(key)));
        let stat: f64 = expected
            .iter()
            .map(|(key, &q)| {
                let e = q * n as f64;
                let o = observed.get(key).copied().unwrap_or(0.0);
                (o - e).powi(2) / e
            })
            .sum();
        let dof = (expected.len() - 1) as f64;
        let p = 1.0 - ChiSquared::new(dof).unwrap().cdf(stat);
        assert!(p > 0.01, "({i}, {sign}): chi-square {stat} on {dof} dof, p = {p}");
    }
}

#[test]
fn gbm_period_law_and_independence() {
    let cfg = gbm_config();
    let w = cfg.weights().unwrap();
    let n = 100_000;
    let draws = sample_tilted(&w, 0, Sign::Plus, cfg.eta, n, &mut stream(3, 0)).unwrap();
    let e = std::f64::consts::E;
    let total = 1.0 + e + e * e;
    for (t, q) in [1.0 / total, e / total, e * e / total].into_iter().enumerate() {
        let f = draws.iter().filter(|s| s.t == t).count() as f64 / n as f64;
        let se = (q * (1.0 - q) / n as f64).sqrt();
        assert!((f - q).abs() <= 4.0 * se, "t = {t}: {f} vs {q}");
    }
    // z is drawn independently of (path, t)
    for j in 0..3 {
        let xs: Vec<f64> = draws.iter().map(|s| s.features[j]).collect();
        let zs: Vec<f64> = draws.iter().map(|s| s.z).collect();
        let corr = correlation(&xs, &zs);
        if corr.is_finite() {
            assert!(corr.abs() <= 4.0 / (n as f64).sqrt(), "feature {j}: corr {corr}");
        }
    }
}

fn correlation(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let (mx, my) = (x.iter().sum::<f64>() / n, y.iter().sum::<f64>() / n);
    let cov: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let vx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let vy: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
    cov / (vx * vy).sqrt()
}

#[test]
fn rho_hat_ignores_sample_order() {
    let (cfg, _) = tree_fixture();
    let w = cfg.weights().unwrap();
    let plan = plan_samples(&w, 0.3, 0.05, BoundVariant::Devroye).unwrap();
    let bank = build_bank(&w, &plan, 4, cfg.eta).unwrap();
    let mut shuffled = bank.clone();
    let mut rng = stream(8, 0);
    for list in &mut shuffled.lists {
        let mut order: Vec<usize> = (0..list.len()).collect();
        order.shuffle(&mut rng);
        let (m, h) = (list.m, list.horizon);
        let old = list.clone();
        list.t = order.iter().map(|&k| old.t[k]).collect();
        list.z = order.iter().map(|&k| old.z[k]).collect();
        list.features = order.iter().flat_map(|&k| old.features[k * m..(k + 1) * m].to_vec()).collect();
        list.drivers = order.iter().flat_map(|&k| old.drivers[k * h..(k + 1) * h].to_vec()).collect();
    }
    for _ in 0..20 {
        let s = vec![rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0)];
        assert_eq!(rho_hat(&bank, &s).unwrap(), rho_hat(&shuffled, &s).unwrap());
    }
}

#[test]
fn search_is_deterministic_and_handles_single_point() {
    let (cfg, _) = tree_fixture();
    let w = cfg.weights().unwrap();
    let plan = plan_samples(&w, 0.3, 0.05, BoundVariant::Devroye).unwrap();
    let bank = build_bank(&w, &plan, 4, cfg.eta).unwrap();
    let grid = GridSpec::default_for(&w);
    let a = run_search(&w, &bank, &grid).unwrap();
    let b = run_search(&w, &bank, &grid).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.rounds.len(), grid.refine_rounds + 1);
    let best = a.evaluated.iter().map(|p| p.rho_hat).fold(f64::INFINITY, f64::min);
    assert_eq!(a.w0_star, best);

    let single = GridSpec {
        bounds: vec![(-1.0, 3.0), (0.0, 2.0)],
        points_per_dim: 1,
        refine_rounds: 0,
        ..grid
    };
    let r = run_search(&w, &bank, &single).unwrap();
    assert_eq!(r.s_star, vec![1.0, 1.0]);
    assert_eq!(r.evaluated.len(), 1);
}

#[test]
fn gbm_scenario_is_the_builtin_one() {
    let cfg = gbm_config();
    let builtin = MarketScenario::paper_gbm();
    assert_eq!(cfg.scenario.model(), builtin.model());
}
