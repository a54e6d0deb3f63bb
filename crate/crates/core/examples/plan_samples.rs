//! Certified sample sizes: minimal plans under both deviation bounds, and
//! the precision certified by fixed budgets.
//!
//! cargo run --example plan_samples

use std::sync::Arc;

use mincap::vcbound::comparison_table;
use mincap::{compute_constants, plan_samples, BoundVariant, MarketScenario, RiskSpec, SamplePlan, Sign};

fn main() -> mincap::Result<()> {
    let w = compute_constants(
        Arc::new(MarketScenario::paper_gbm()),
        Arc::new(RiskSpec::paper_gbm()),
        None,
        0,
    )?;
    let (epsilon, delta) = (0.5, 0.05);

    let plan = plan_samples(&w, epsilon, delta, BoundVariant::Devroye)?;
    print!("{}", plan.report_table());
    println!("failure mass aleph * delta = {}", plan.failure_mass());

    println!("\nbound comparison:");
    print!("{}", comparison_table(&w, epsilon, delta)?);

    // budgets of 1.4M and 10.5k samples certify a tighter epsilon than asked
    let budgets = [(0, Sign::Plus, 1_400_000), (1, Sign::Minus, 10_500)];
    let fixed = SamplePlan::from_budgets(&w, &budgets, None, delta, BoundVariant::Devroye)?;
    println!("\nfixed budgets certify epsilon = {:.4}", fixed.epsilon);
    Ok(())
}
