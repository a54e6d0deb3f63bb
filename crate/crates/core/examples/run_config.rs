//! The full pipeline driven by a TOML configuration, as the `mincap run`
//! command does.
//!
//! cargo run --release --example run_config -- [path/to/config.toml]

use std::path::PathBuf;

use mincap::cli::cmd_run;
use mincap::config::RunConfig;

fn main() -> mincap::Result<()> {
    let path = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("examples/configs/tree.toml"));
    let cfg = RunConfig::from_path(&path)?;
    let report = cmd_run(&cfg, None, None)?;
    print!("{}", report.to_text());
    Ok(())
}
