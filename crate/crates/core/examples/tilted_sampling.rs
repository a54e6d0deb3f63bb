//! Drawing from the tilted measures: the GBM direct sampler and, on a
//! small tree, the direct and rejection routes side by side.
//!
//! cargo run --example tilted_sampling

use std::collections::BTreeMap;
use std::sync::Arc;

use mincap::market::{Branch, Model, Tree};
use mincap::rng::stream;
use mincap::sampler::{sample_tilted, SamplerRoute, TiltedSampler};
use mincap::{compute_constants, Bounds, Density, Eta, MarketScenario, RiskSpec, ScenarioMeasure, Sign};

fn main() -> mincap::Result<()> {
    let gbm = compute_constants(
        Arc::new(MarketScenario::paper_gbm()),
        Arc::new(RiskSpec::paper_gbm()),
        None,
        0,
    )?;
    let n = 100_000;
    let draws = sample_tilted(&gbm, 0, Sign::Plus, Eta::Normal, n, &mut stream(1, 0))?;
    let mut periods = [0usize; 3];
    for s in &draws {
        periods[s.t] += 1;
    }
    let e = std::f64::consts::E;
    let total = 1.0 + e + e * e;
    println!("period law of mu_1^+ (n = {n}):");
    for (t, count) in periods.iter().enumerate() {
        println!("  t = {t}: {:.4} (exact {:.4})", *count as f64 / n as f64, e.powi(t as i32) / total);
    }

    let tree = Tree {
        horizon: 2,
        s0: 10.0,
        branches: vec![
            Branch { driver: 1.0, prob: 0.375, growth: 1.25 },
            Branch { driver: -1.0, prob: 0.625, growth: 0.85 },
        ],
    };
    let scenario = MarketScenario::new(Model::Tree(tree), Bounds::constant(2, -0.5, 1.0))?;
    let spec = RiskSpec::new(vec![ScenarioMeasure {
        density: Density::TreeProduct { probs: vec![0.6, 0.4] },
        alpha: 1.0,
    }])?;
    let w = compute_constants(Arc::new(scenario), Arc::new(spec), None, 0)?;
    let envelope = 10.0;
    for (name, route) in [("direct", SamplerRoute::Direct), ("rejection", SamplerRoute::Rejection { envelope })] {
        let sampler = TiltedSampler::new(&w, 0, Sign::Plus, Eta::Normal, route)?;
        let mut rng = stream(2, 0);
        let mut freq: BTreeMap<(String, usize), usize> = BTreeMap::new();
        for _ in 0..n {
            let s = sampler.draw(&mut rng)?;
            let label: String = s.path.drivers.iter().map(|&z| if z > 0.0 { 'u' } else { 'd' }).collect();
            *freq.entry((label, s.t)).or_default() += 1;
        }
        println!("{name} route, (path, t) frequencies:");
        for ((label, t), count) in freq {
            println!("  {label} t={t}: {:.4}", count as f64 / n as f64);
        }
    }
    Ok(())
}
