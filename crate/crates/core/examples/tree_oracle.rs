//! Exact checks on a two-period tree: the minimal capital over all adapted
//! strategies, the exact capital of the parametric family, and the sampled
//! estimate against both.
//!
//! cargo run --release --example tree_oracle

use std::path::PathBuf;

use mincap::cli::cmd_oracle_check;
use mincap::config::RunConfig;
use mincap::oracle::{min_capital_lp, ExactPipeline};

fn main() -> mincap::Result<()> {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("examples/configs/tree.toml");
    let cfg = RunConfig::from_path(path)?;
    let w = cfg.weights()?;

    let lp = min_capital_lp(&cfg.scenario, &cfg.spec)?;
    println!("minimal capital over adapted strategies: {:.7}", lp.w0_min);
    for (t, level) in lp.holdings.levels.iter().enumerate() {
        println!("  holdings at t = {t}: {level:?}");
    }

    let pipeline = ExactPipeline::new(&w)?;
    let family = pipeline.grid_minimum(&cfg.grid_spec(&w)?, cfg.eta)?;
    println!(
        "exact family minimum {:.6} at s = {:?}, gap {:.6}",
        family.rho,
        family.s,
        family.rho - lp.w0_min
    );
    for (i, sign, p) in &family.tilted {
        println!("  tilted probability ({}, {sign}) = {p:.6}", i + 1);
    }

    let check = cmd_oracle_check(&cfg, None)?;
    println!("{}", serde_json::to_string_pretty(&check).expect("report serialises"));
    Ok(())
}
