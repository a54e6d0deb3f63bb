//! A sample bank and the capital estimate rho_hat(s), compared with a
//! plain Monte-Carlo evaluation of the same strategy.
//!
//! cargo run --release --example estimate_rho

use std::sync::Arc;

use mincap::risk::{rho_mc_crosscheck, CrosscheckRoute};
use mincap::weights::ParametricStrategy;
use mincap::{build_bank, compute_constants, rho_hat, MarketScenario, RiskSpec, SamplePlan, Sign, StrategyParams};
use mincap::{BoundVariant, Eta};

fn main() -> mincap::Result<()> {
    let w = compute_constants(
        Arc::new(MarketScenario::paper_gbm()),
        Arc::new(RiskSpec::paper_gbm()),
        None,
        0,
    )?;
    // a hundredth of the published budgets; the certificate widens to match
    let budgets = [(0, Sign::Plus, 14_000), (1, Sign::Minus, 105)];
    let plan = SamplePlan::from_budgets(&w, &budgets, None, 0.05, BoundVariant::Devroye)?;
    let bank = build_bank(&w, &plan, 7, Eta::Normal)?;
    println!("bank: {} samples, {}", bank.total_samples(), bank.certificate());

    for s in [vec![0.0, 0.0, 0.0], vec![0.07, 14.5, 0.0]] {
        let est = rho_hat(&bank, &s)?;
        let params = StrategyParams::new(s.clone(), Eta::Normal);
        let rule = ParametricStrategy { weights: &w, params: &params };
        let mc = rho_mc_crosscheck(w.spec(), w.scenario(), &rule, 0.0, 200_000, 7, CrosscheckRoute::ScenarioMeasure)?;
        println!(
            "s = {s:?}: rho_hat = {:.4}, D = {:?}, plain Monte Carlo {:.4}",
            est.rho_hat,
            est.per_i.iter().map(|d| (d * 1e4).round() / 1e4).collect::<Vec<_>>(),
            mc.estimate
        );
    }
    Ok(())
}
