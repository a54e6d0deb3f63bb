mod common;

use std::sync::Arc;

use approx::assert_relative_eq;
use mincap::estimator::empirical_frequency;
use mincap::market::{Branch, Model, Tree};
use mincap::oracle::{min_capital_lp, ExactPipeline};
use mincap::risk::{rho_exact, rho_terms_exact};
use mincap::sampler::build_bank;
use mincap::weights::{ParametricStrategy, StrategyParams};
use mincap::{compute_constants, plan_samples, Bounds, BoundVariant, Density, Eta, MarketScenario, RiskSpec, ScenarioMeasure, Sign};
use proptest::prelude::*;
use rand::Rng;

use common::{capital_lp_rows, tree_fixture, vertex_minimum};

#[test]
fn fixture_constants_match_frozen_values() {
    let (cfg, exp) = tree_fixture();
    let w = cfg.weights().unwrap();
    assert_eq!(w.aleph(), exp.aleph);
    for i in 0..2 {
        let c = w.measure(i);
        assert_relative_eq!(c.c, exp.c[i], epsilon = 1e-12);
        assert_relative_eq!(c.d_plus, exp.d_plus[i], epsilon = 1e-12);
        assert_relative_eq!(c.d_minus, exp.d_minus[i], epsilon = 1e-12);
    }
}

#[test]
fn fixture_lp_rows_match_frozen_gradients() {
    let (cfg, exp) = tree_fixture();
    let (a, _) = capital_lp_rows(&cfg);
    for (row, g) in a.iter().zip(&exp.gradients) {
        for (x, y) in row[1..].iter().zip(g) {
            assert_relative_eq!(*x, *y, epsilon = 1e-12);
        }
    }
}

#[test]
fn lp_matches_frozen_vertex_enumeration() {
    let (cfg, exp) = tree_fixture();
    let lp = min_capital_lp(&cfg.scenario, &cfg.spec).unwrap();
    assert_relative_eq!(lp.w0_min, exp.w0_min, epsilon = 1e-9);
    let flat: Vec<f64> = lp.holdings.levels.iter().flatten().copied().collect();
    for (x, y) in flat.iter().zip(&exp.holdings) {
        assert_relative_eq!(*x, *y, epsilon = 1e-9);
    }
    // the optimal strategy attains the capital exactly
    let rho = rho_exact(&cfg.spec, &cfg.scenario, &lp.holdings, lp.w0_min).unwrap();
    assert!(rho.abs() <= 1e-9, "rho at optimum {rho}");
}

#[test]
fn vertex_enumeration_reproduces_fixture() {
    let (cfg, exp) = tree_fixture();
    let (a, c) = capital_lp_rows(&cfg);
    let x = vertex_minimum(&a, &c).unwrap();
    assert_relative_eq!(x[0], exp.w0_min, epsilon = 1e-12);
}

fn random_tree(growths: (f64, f64), p: f64, q1: f64, q2: f64, alphas: (f64, f64)) -> (Arc<MarketScenario>, Arc<RiskSpec>) {
    let tree = Tree {
        horizon: 2,
        s0: 1.0,
        branches: vec![
            Branch { driver: 1.0, prob: p, growth: growths.0 },
            Branch { driver: -1.0, prob: 1.0 - p, growth: growths.1 },
        ],
    };
    let scenario = MarketScenario::new(Model::Tree(tree), Bounds::constant(2, -1.0, 2.0)).unwrap();
    let spec = RiskSpec::new(vec![
        ScenarioMeasure { density: Density::TreeProduct { probs: vec![q1, 1.0 - q1] }, alpha: alphas.0 },
        ScenarioMeasure { density: Density::TreeProduct { probs: vec![q2, 1.0 - q2] }, alpha: alphas.1 },
    ])
    .unwrap();
    (Arc::new(scenario), Arc::new(spec))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn simplex_lp_agrees_with_vertex_enumeration(
        up in 1.05f64..1.6, down in 0.5f64..0.95, p in 0.1f64..0.9,
        q1 in 0.05f64..0.95, q2 in 0.05f64..0.95, a1 in -1.0f64..2.0, a2 in -1.0f64..2.0,
    ) {
        let (scenario, spec) = random_tree((up, down), p, q1, q2, (a1, a2));
        let cfg = mincap::config::RunConfig {
            scenario: scenario.clone(),
            spec: spec.clone(),
            ..common::tree_fixture().0
        };
        let (a, c) = capital_lp_rows(&cfg);
        let vertex = vertex_minimum(&a, &c).unwrap();
        let lp = min_capital_lp(&scenario, &spec).unwrap();
        prop_assert!((lp.w0_min - vertex[0]).abs() <= 1e-8 * (1.0 + vertex[0].abs()),
            "lp {} vs vertex {}", lp.w0_min, vertex[0]);
    }

    #[test]
    fn exact_family_never_beats_lp(
        up in 1.05f64..1.6, down in 0.5f64..0.95, p in 0.1f64..0.9,
        q1 in 0.05f64..0.95, q2 in 0.05f64..0.95,
        s0 in -5.0f64..5.0, s1 in -5.0f64..5.0,
    ) {
        let (scenario, spec) = random_tree((up, down), p, q1, q2, (0.3, 0.1));
        let w = compute_constants(scenario.clone(), spec.clone(), None, 1).unwrap();
        let lp = min_capital_lp(&scenario, &spec).unwrap();
        let pipeline = ExactPipeline::new(&w).unwrap();
        let rho = pipeline.rho(&[s0, s1], Eta::Normal).unwrap();
        prop_assert!(rho >= lp.w0_min - 1e-9);
    }
}

#[test]
fn exact_pipeline_agrees_with_enumerated_rho() {
    let (cfg, _) = tree_fixture();
    let w = cfg.weights().unwrap();
    let pipeline = ExactPipeline::new(&w).unwrap();
    let mut rng = mincap::rng::stream(5, 0);
    for _ in 0..20 {
        let s = vec![rng.random_range(-4.0..4.0), rng.random_range(-4.0..4.0)];
        let w0: f64 = rng.random_range(-1.0..1.0);
        let params = StrategyParams::new(s.clone(), cfg.eta);
        let rule = ParametricStrategy { weights: &w, params: &params };
        let direct = rho_exact(&cfg.spec, &cfg.scenario, &rule, w0).unwrap();
        let point = pipeline.point(&s, cfg.eta).unwrap();
        assert_relative_eq!(point.rho - w0, direct, epsilon = 1e-12);
        // the tilted decomposition gives the same terms
        let terms = rho_terms_exact(&cfg.spec, &cfg.scenario, &rule).unwrap();
        for (d, t) in pipeline.d_terms(&s, cfg.eta).unwrap().iter().zip(&terms) {
            assert_relative_eq!(*d, *t, epsilon = 1e-12);
        }
    }
}

#[test]
fn sampled_frequencies_track_exact_tilted_probabilities() {
    let (cfg, _) = tree_fixture();
    let w = cfg.weights().unwrap();
    let plan = plan_samples(&w, cfg.epsilon, cfg.delta, BoundVariant::Devroye).unwrap();
    let bank = build_bank(&w, &plan, 99, cfg.eta).unwrap();
    let pipeline = ExactPipeline::new(&w).unwrap();
    let mut rng = mincap::rng::stream(6, 0);
    for _ in 0..100 {
        let s = vec![rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0)];
        for (i, sign) in w.nonzero_pairs() {
            let list = bank.list(i, sign).unwrap();
            let est = empirical_frequency(list, &s).unwrap();
            let exact = pipeline.tilted_probability(i, sign, &s, cfg.eta).unwrap();
            let x = cfg.epsilon / w.measure(i).normalizer(sign);
            assert!((est - exact).abs() <= x, "({i}, {sign}) at {s:?}: {est} vs {exact}");
        }
    }
}

#[test]
fn tilted_probability_at_origin_is_one_half() {
    let (cfg, _) = tree_fixture();
    let w = cfg.weights().unwrap();
    let pipeline = ExactPipeline::new(&w).unwrap();
    assert_relative_eq!(pipeline.tilted_probability(0, Sign::Plus, &[0.0, 0.0], Eta::Normal).unwrap(), 0.5, epsilon = 1e-12);
    assert_relative_eq!(pipeline.tilted_probability(1, Sign::Minus, &[0.0, 0.0], Eta::Normal).unwrap(), 0.5, epsilon = 1e-12);
}
