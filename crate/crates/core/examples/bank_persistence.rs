//! Saving a sample bank, reloading it, and exporting it as CSV. Reuse is
//! keyed on everything the certificate depends on.
//!
//! cargo run --example bank_persistence

use std::path::PathBuf;

use mincap::config::RunConfig;
use mincap::sampler::{bank_key, SampleBank};
use mincap::build_bank;

fn main() -> mincap::Result<()> {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("examples/configs/tree.toml");
    let cfg = RunConfig::from_path(path)?;
    let w = cfg.weights()?;
    let plan = cfg.plan(&w)?;
    let bank = build_bank(&w, &plan, cfg.seed, cfg.eta)?;

    let dir = std::env::temp_dir().join("mincap_bank_example");
    std::fs::create_dir_all(&dir)?;
    bank.save(dir.join("bank.bin"))?;
    bank.write_csv(dir.join("bank.csv"))?;
    let loaded = SampleBank::load(dir.join("bank.bin"))?;
    println!("saved and reloaded {} samples, identical: {}", loaded.total_samples(), loaded == bank);
    println!("key {}", loaded.key);

    let other = bank_key(&w, cfg.eta, &plan, cfg.seed + 1);
    println!("a different seed gives key {other}; a run with it would rebuild the bank");
    Ok(())
}
