//! Weight-process constants for the three-period GBM market with three
//! shifted-drift scenarios.
//!
//! cargo run --example gbm_constants

use std::sync::Arc;

use mincap::{compute_constants, MarketScenario, RiskSpec};

fn main() -> mincap::Result<()> {
    let scenario = Arc::new(MarketScenario::paper_gbm());
    let spec = Arc::new(RiskSpec::paper_gbm());
    let w = compute_constants(scenario, spec, None, 0)?;

    println!("{:>3} {:>10} {:>12} {:>12}", "i", "c", "d+", "d-");
    for (i, c) in w.constants().iter().enumerate() {
        println!("{:>3} {:>10.4} {:>12.6} {:>12.6}", i + 1, c.c, c.d_plus, c.d_minus);
    }
    println!("aleph = {}", w.aleph());

    let e = std::f64::consts::E;
    for t in 0..w.scenario().horizon() {
        let mean = w.measure(0).expected_weight(t);
        println!("E v_{t}(f_1) = {mean:.6} = {:.6} e^{t}", mean / e.powi(t as i32));
    }
    Ok(())
}
