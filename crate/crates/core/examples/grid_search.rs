//! Grid search with refinement for the near-minimal capital, writing the
//! search trace as CSV.
//!
//! cargo run --release --example grid_search

use std::sync::Arc;

use mincap::{build_bank, compute_constants, plan_samples, run_search, BoundVariant, Eta, GridSpec};
use mincap::{MarketScenario, RiskSpec};

fn main() -> mincap::Result<()> {
    let w = compute_constants(
        Arc::new(MarketScenario::paper_gbm()),
        Arc::new(RiskSpec::paper_gbm()),
        None,
        0,
    )?;
    // a looser precision keeps the bank small
    let plan = plan_samples(&w, 2.0, 0.05, BoundVariant::Devroye)?;
    let bank = build_bank(&w, &plan, 20240601, Eta::Normal)?;
    let grid = GridSpec {
        bounds: vec![(-1.0, 1.0), (0.0, 20.0)],
        ..GridSpec::default_for(&w)
    };
    let result = run_search(&w, &bank, &grid)?;
    print!("{}", result.summary());
    let path = std::env::temp_dir().join("mincap_grid_trace.csv");
    result.write_trace_csv(&path)?;
    println!("trace written to {}", path.display());
    Ok(())
}
