use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use mincap::cli::{cmd_eval, cmd_oracle_check, cmd_plan, cmd_run, cmd_sample};
use mincap::config::RunConfig;
use mincap::Result;

#[derive(Parser)]
#[command(name = "mincap", version, about = "Near-minimal capital under convex risk measures")]
struct Args {
    #[command(subcommand)]
    command: Command,
    /// TOML run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the configured master seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Output directory for reports and traces.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Sample bank file to reuse or create.
    #[arg(long, global = true)]
    bank: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Constants, aleph and certified sample sizes.
    Plan,
    /// Draw and save the sample bank.
    Sample {
        /// Also export the bank as CSV into --out.
        #[arg(long)]
        csv: bool,
    },
    /// Full pipeline: bank, grid search, cross-check, oracle on trees.
    Run,
    /// Estimate rho at one parameter vector.
    Eval {
        /// Comma-separated s, one entry per scenario measure.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        s: Vec<f64>,
        #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
        w0: f64,
    },
    /// Exact checks on a finite tree.
    OracleCheck,
}

fn execute(args: &Args) -> Result<String> {
    let path = args
        .config
        .as_ref()
        .ok_or_else(|| mincap::Error::Argument("--config is required".into()))?;
    let mut cfg = RunConfig::from_path(path)?;
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    let out = args
        .out
        .clone()
        .or_else(|| cfg.output.dir.as_ref().map(PathBuf::from));
    let bank = args
        .bank
        .clone()
        .or_else(|| cfg.output.bank.as_ref().map(PathBuf::from));
    if let Some(dir) = &out {
        std::fs::create_dir_all(dir)?;
    }
    let write = |name: &str, json: String| -> Result<()> {
        if let Some(dir) = &out {
            std::fs::write(dir.join(name), json)?;
        }
        Ok(())
    };
    Ok(match &args.command {
        Command::Plan => {
            let r = cmd_plan(&cfg)?;
            write("plan.json", json(&r))?;
            r.to_text()
        }
        Command::Sample { csv } => {
            let r = cmd_sample(&cfg, out.as_deref(), bank.as_deref(), *csv)?;
            write("sample.json", json(&r))?;
            json(&r)
        }
        Command::Run => cmd_run(&cfg, out.as_deref(), bank.as_deref())?.to_text(),
        Command::Eval { s, w0 } => {
            let r = cmd_eval(&cfg, s, *w0, bank.as_deref())?;
            write("eval.json", json(&r))?;
            json(&r)
        }
        Command::OracleCheck => {
            let r = cmd_oracle_check(&cfg, bank.as_deref())?;
            write("oracle.json", json(&r))?;
            json(&r)
        }
    })
}

fn json<T: serde::Serialize>(report: &T) -> String {
    serde_json::to_string_pretty(report).expect("report serialises") + "\n"
}

fn main() -> ExitCode {
    let args = Args::parse();
    let run = || execute(&args);
    let result = match args.workers {
        Some(n) => match rayon::ThreadPoolBuilder::new().num_threads(n).build() {
            Ok(pool) => pool.install(run),
            Err(e) => {
                eprintln!("error: {e}");
                return ExitCode::FAILURE;
            }
        },
        None => run(),
    };
    match result {
        Ok(text) => {
            print!("{text}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
