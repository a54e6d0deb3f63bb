//! Batch commands behind the `mincap` binary.
//!
//! Every command is a deterministic function of the configuration (seed
//! included) and returns a report that serialises to versioned JSON. No
//! report carries timings or absolute paths, so reruns are byte-identical.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::estimator::{rho_hat, Certificate};
use crate::oracle::{min_capital_lp, ExactPipeline};
use crate::risk::{rho_mc_crosscheck, CrosscheckRoute};
use crate::sampler::{bank_key, build_bank, SampleBank};
use crate::search::{run_search, RoundTrace};
use crate::vcbound::{comparison_table, SamplePlan};
use crate::weights::{ParametricStrategy, Provenance, StrategyParams, TiltedWeights};

pub const REPORT_SCHEMA: &str = "mincap.report/1";

/// File names written under the output directory.
pub const REPORT_FILE: &str = "report.json";
pub const TRACE_FILE: &str = "trace.csv";
pub const BANK_FILE: &str = "bank.bin";
pub const BANK_CSV_FILE: &str = "bank.csv";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstantsRow {
    /// One-based.
    pub measure: usize,
    pub alpha: f64,
    pub c: f64,
    pub d_plus: f64,
    pub d_minus: f64,
    pub provenance: Provenance,
}

fn constants_rows(weights: &TiltedWeights) -> Vec<ConstantsRow> {
    weights
        .constants()
        .iter()
        .zip(&weights.spec().measures)
        .enumerate()
        .map(|(i, (c, m))| ConstantsRow {
            measure: i + 1,
            alpha: m.alpha,
            c: c.c,
            d_plus: c.d_plus,
            d_minus: c.d_minus,
            provenance: c.provenance.clone(),
        })
        .collect()
}

fn constants_table(rows: &[ConstantsRow]) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{:>3} {:>14} {:>14} {:>14} {:>14}", "i", "alpha", "c", "d+", "d-");
    for r in rows {
        let _ = writeln!(
            out,
            "{:>3} {:>14.6} {:>14.6} {:>14.6} {:>14.6}",
            r.measure, r.alpha, r.c, r.d_plus, r.d_minus
        );
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanReport {
    pub schema: String,
    pub command: String,
    pub constants: Vec<ConstantsRow>,
    pub aleph: usize,
    pub plan: SamplePlan,
    /// Minimal sizes under both deviation bounds.
    pub comparison: Option<String>,
}

impl PlanReport {
    pub fn to_text(&self) -> String {
        let mut out = constants_table(&self.constants);
        let _ = writeln!(out, "aleph = {}", self.aleph);
        out.push_str(&self.plan.report_table());
        if let Some(c) = &self.comparison {
            out.push_str("minimal sizes by bound:\n");
            out.push_str(c);
        }
        out
    }
}

/// Constants, `aleph` and the sample plan.
pub fn cmd_plan(cfg: &RunConfig) -> Result<PlanReport> {
    let weights = cfg.weights()?;
    let plan = cfg.plan(&weights)?;
    let comparison = if weights.aleph() > 0 {
        Some(comparison_table(&weights, plan.epsilon, cfg.delta)?)
    } else {
        None
    };
    Ok(PlanReport {
        schema: REPORT_SCHEMA.into(),
        command: "plan".into(),
        constants: constants_rows(&weights),
        aleph: weights.aleph(),
        plan,
        comparison,
    })
}

fn file_in(dir: Option<&Path>, name: &str) -> Option<PathBuf> {
    dir.map(|d| d.join(name))
}

/// Loads the bank at `path` if it exists and matches the inputs, otherwise
/// draws it (and saves it there when a path is given).
fn obtain_bank(
    cfg: &RunConfig,
    weights: &TiltedWeights,
    plan: &SamplePlan,
    path: Option<&Path>,
) -> Result<SampleBank> {
    let key = bank_key(weights, cfg.eta, plan, cfg.seed);
    if let Some(p) = path.filter(|p| p.exists()) {
        let bank = SampleBank::load(p)?;
        if bank.key != key {
            return Err(Error::Certification(format!(
                "bank {} was drawn for different inputs (key {} != {key})",
                p.display(),
                bank.key
            )));
        }
        return Ok(bank);
    }
    let bank = build_bank(weights, plan, cfg.seed, cfg.eta)?;
    if let Some(p) = path {
        bank.save(p)?;
    }
    Ok(bank)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleReport {
    pub schema: String,
    pub command: String,
    pub bank_key: String,
    pub plan: SamplePlan,
    pub total_samples: usize,
    pub certificate: Certificate,
}

/// Draws the bank, saves it to `bank` (default `out/bank.bin`) and, with
/// `csv`, exports it next to the report.
pub fn cmd_sample(cfg: &RunConfig, out: Option<&Path>, bank: Option<&Path>, csv: bool) -> Result<SampleReport> {
    let weights = cfg.weights()?;
    let plan = cfg.plan(&weights)?;
    let target = bank.map(Path::to_path_buf).or_else(|| file_in(out, BANK_FILE));
    let b = build_bank(&weights, &plan, cfg.seed, cfg.eta)?;
    if let Some(p) = &target {
        b.save(p)?;
    }
    if csv {
        if let Some(p) = file_in(out, BANK_CSV_FILE) {
            b.write_csv(p)?;
        }
    }
    Ok(SampleReport {
        schema: REPORT_SCHEMA.into(),
        command: "sample".into(),
        bank_key: b.key.clone(),
        certificate: b.certificate(),
        plan,
        total_samples: b.total_samples(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrosscheckReport {
    pub route: CrosscheckRoute,
    pub samples: usize,
    /// Plain Monte-Carlo `rho(W(xi(s)))`.
    pub rho: f64,
    /// `-E(W f_i) + alpha_i` per measure.
    pub terms: Vec<f64>,
    pub std_errors: Vec<f64>,
    /// `rho_hat(s) - rho`.
    pub difference: f64,
}

fn crosscheck(cfg: &RunConfig, weights: &TiltedWeights, s: &[f64], rho_hat: f64) -> Result<CrosscheckReport> {
    let params = StrategyParams::new(s.to_vec(), cfg.eta);
    let rule = ParametricStrategy {
        weights,
        params: &params,
    };
    let cc = rho_mc_crosscheck(
        &cfg.spec,
        &cfg.scenario,
        &rule,
        0.0,
        cfg.crosscheck_samples,
        cfg.seed,
        cfg.crosscheck_route,
    )?;
    Ok(CrosscheckReport {
        route: cc.route,
        samples: cc.samples,
        rho: cc.estimate,
        terms: cc.terms(&cfg.spec),
        std_errors: cc.std_errors.clone(),
        difference: rho_hat - cc.estimate,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleBlock {
    /// Minimal capital over all adapted strategies.
    pub w0_min_lp: f64,
    /// Exact `rho(W(xi(s_star)))`.
    pub exact_rho_at_s_star: f64,
    /// Exact minimum over the search grid and its refinements.
    pub exact_family_minimum: f64,
    pub exact_family_argmin: Vec<f64>,
    /// `exact_family_minimum - w0_min_lp`, nonnegative.
    pub family_gap: f64,
    /// `w0_star - w0_min_lp`; certified to exceed `-sup_error`.
    pub w0_star_minus_lp: f64,
}

fn oracle_block(cfg: &RunConfig, weights: &TiltedWeights, grid: &crate::search::GridSpec, s_star: &[f64], w0_star: f64) -> Result<OracleBlock> {
    let lp = min_capital_lp(&cfg.scenario, &cfg.spec)?;
    let pipeline = ExactPipeline::new(weights)?;
    let at_star = pipeline.rho(s_star, cfg.eta)?;
    let family = if grid.active_dims.is_empty() {
        pipeline.point(&vec![0.0; weights.m()], cfg.eta)?
    } else {
        pipeline.grid_minimum(grid, cfg.eta)?
    };
    Ok(OracleBlock {
        w0_min_lp: lp.w0_min,
        exact_rho_at_s_star: at_star,
        exact_family_minimum: family.rho,
        exact_family_argmin: family.s,
        family_gap: family.rho - lp.w0_min,
        w0_star_minus_lp: w0_star - lp.w0_min,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub schema: String,
    pub command: String,
    pub seed: u64,
    pub scenario: String,
    pub horizon: usize,
    pub eta: String,
    pub constants: Vec<ConstantsRow>,
    pub aleph: usize,
    pub plan: SamplePlan,
    pub bank_key: String,
    pub w0_star: f64,
    pub s_star: Vec<f64>,
    /// `D_i(s_star)`.
    pub per_i: Vec<f64>,
    pub argmax_i: usize,
    pub certificate: Certificate,
    pub certificate_text: String,
    pub strategy: String,
    pub rounds: Vec<RoundTrace>,
    pub trace_file: String,
    pub crosscheck: CrosscheckReport,
    pub oracle: Option<OracleBlock>,
    pub note: Option<String>,
}

impl RunReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serialises") + "\n"
    }

    pub fn to_text(&self) -> String {
        let mut out = constants_table(&self.constants);
        let _ = writeln!(out, "aleph = {}", self.aleph);
        out.push_str(&self.plan.report_table());
        for r in &self.rounds {
            let _ = writeln!(
                out,
                "round {}: {} points, box {:?}, best rho_hat {:.6}",
                r.round, r.points, r.bounds, r.best_rho_hat
            );
        }
        let _ = writeln!(out, "w0* = {:.6}   s* = {:?}", self.w0_star, self.s_star);
        let _ = writeln!(out, "certificate: {}", self.certificate_text);
        let _ = writeln!(out, "strategy: {}", self.strategy);
        let cc = &self.crosscheck;
        let _ = writeln!(
            out,
            "cross-check ({:?}, n = {}): rho = {:.6}, rho_hat - rho = {:.6}, max se = {:.6}",
            cc.route,
            cc.samples,
            cc.rho,
            cc.difference,
            cc.std_errors.iter().copied().fold(0.0, f64::max)
        );
        if let Some(o) = &self.oracle {
            let _ = writeln!(
                out,
                "oracle: LP minimum {:.6}, exact rho at s* {:.6}, exact family minimum {:.6} (gap {:.6})",
                o.w0_min_lp, o.exact_rho_at_s_star, o.exact_family_minimum, o.family_gap
            );
        }
        if let Some(n) = &self.note {
            let _ = writeln!(out, "note: {n}");
        }
        out
    }
}

/// Plan, sample, search, cross-check and (on trees) the exact oracle.
/// Writes `report.json` and `trace.csv` into `out` when given.
pub fn cmd_run(cfg: &RunConfig, out: Option<&Path>, bank: Option<&Path>) -> Result<RunReport> {
    let weights = cfg.weights()?;
    let plan = cfg.plan(&weights)?;
    run_with_plan(cfg, &weights, plan, out, bank)
}

/// [`cmd_run`] with an explicit plan, e.g. reduced budgets.
pub fn run_with_plan(
    cfg: &RunConfig,
    weights: &TiltedWeights,
    plan: SamplePlan,
    out: Option<&Path>,
    bank: Option<&Path>,
) -> Result<RunReport> {
    let bank = obtain_bank(cfg, weights, &plan, bank)?;
    let grid = cfg.grid_spec(weights)?;
    let result = run_search(weights, &bank, &grid)?;
    let cc = crosscheck(cfg, weights, &result.s_star, result.w0_star)?;
    let oracle = if cfg.scenario.as_tree().is_some() {
        Some(oracle_block(cfg, weights, &grid, &result.s_star, result.w0_star)?)
    } else {
        None
    };
    let strategy = format!(
        "xi*_t = (b_t - a_t) * {}(lambda_t) + a_t, {}",
        cfg.eta.name(),
        weights.describe_lambda(&result.s_star)
    );
    let report = RunReport {
        schema: REPORT_SCHEMA.into(),
        command: "run".into(),
        seed: cfg.seed,
        scenario: cfg.scenario.kind().name().into(),
        horizon: cfg.scenario.horizon(),
        eta: cfg.eta.name().into(),
        constants: constants_rows(weights),
        aleph: weights.aleph(),
        plan,
        bank_key: bank.key.clone(),
        w0_star: result.w0_star,
        s_star: result.s_star.clone(),
        per_i: result.estimate.per_i.clone(),
        argmax_i: result.estimate.argmax_i,
        certificate_text: result.certificate.to_string(),
        certificate: result.certificate,
        strategy,
        rounds: result.rounds.clone(),
        trace_file: TRACE_FILE.into(),
        crosscheck: cc,
        oracle,
        note: result.note.clone(),
    };
    if let Some(dir) = out {
        std::fs::create_dir_all(dir)?;
        result.write_trace_csv(dir.join(TRACE_FILE))?;
        std::fs::write(dir.join(REPORT_FILE), report.to_json())?;
    }
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub schema: String,
    pub command: String,
    pub s: Vec<f64>,
    pub w0: f64,
    pub rho_hat: f64,
    /// `rho_hat - w0`, the estimate of `rho(w0 + W(xi(s)))`.
    pub rho_hat_at_w0: f64,
    pub per_i: Vec<f64>,
    pub argmax_i: usize,
    pub certificate: Certificate,
    pub crosscheck: CrosscheckReport,
    /// `sup_error + 4 * max standard error`.
    pub tolerance: f64,
    pub agrees: bool,
}

/// `rho_hat(s)` against the plain Monte-Carlo cross-check.
pub fn cmd_eval(cfg: &RunConfig, s: &[f64], w0: f64, bank: Option<&Path>) -> Result<EvalReport> {
    let weights = cfg.weights()?;
    if s.len() != weights.m() {
        return Err(Error::Argument(format!(
            "s has {} entries, the risk measure has {} scenarios",
            s.len(),
            weights.m()
        )));
    }
    let plan = cfg.plan(&weights)?;
    let bank = obtain_bank(cfg, &weights, &plan, bank)?;
    let est = rho_hat(&bank, s)?;
    let cc = crosscheck(cfg, &weights, s, est.rho_hat)?;
    let max_se = cc.std_errors.iter().copied().fold(0.0, f64::max);
    let tolerance = est.certificate.sup_error + 4.0 * max_se;
    Ok(EvalReport {
        schema: REPORT_SCHEMA.into(),
        command: "eval".into(),
        s: s.to_vec(),
        w0,
        rho_hat: est.rho_hat,
        rho_hat_at_w0: est.rho_hat - w0,
        per_i: est.per_i,
        argmax_i: est.argmax_i,
        certificate: est.certificate,
        agrees: cc.difference.abs() <= tolerance,
        tolerance,
        crosscheck: cc,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleCheckReport {
    pub schema: String,
    pub command: String,
    pub w0_min_lp: f64,
    /// LP holdings per level and node.
    pub lp_holdings: Vec<Vec<f64>>,
    pub w0_star: f64,
    pub s_star: Vec<f64>,
    pub certificate: Certificate,
    /// `max |rho_hat(s) - rho(W(xi(s)))|` over the initial search grid.
    pub max_deviation: f64,
    pub deviation_within_certificate: bool,
    pub lower_bound_holds: bool,
    pub exact_family_minimum: f64,
    pub family_gap: f64,
}

/// Finite trees only: compares the sampled pipeline with exact values.
pub fn cmd_oracle_check(cfg: &RunConfig, bank: Option<&Path>) -> Result<OracleCheckReport> {
    let weights = cfg.weights()?;
    let lp = min_capital_lp(&cfg.scenario, &cfg.spec)?;
    let plan = cfg.plan(&weights)?;
    let bank = obtain_bank(cfg, &weights, &plan, bank)?;
    let grid = cfg.grid_spec(&weights)?;
    let result = run_search(&weights, &bank, &grid)?;
    let pipeline = ExactPipeline::new(&weights)?;
    let nodes = grid.nodes(&grid.bounds, weights.m());
    let estimates = crate::estimator::rho_hat_batch(&bank, &nodes)?;
    let mut max_deviation: f64 = 0.0;
    for e in &estimates {
        let exact = pipeline.rho(&e.s, cfg.eta)?;
        max_deviation = max_deviation.max((e.rho_hat - exact).abs());
    }
    let family_min = pipeline.grid_minimum(&grid, cfg.eta)?.rho;
    let certificate = bank.certificate();
    Ok(OracleCheckReport {
        schema: REPORT_SCHEMA.into(),
        command: "oracle-check".into(),
        w0_min_lp: lp.w0_min,
        lp_holdings: lp.holdings.levels,
        w0_star: result.w0_star,
        s_star: result.s_star,
        max_deviation,
        deviation_within_certificate: max_deviation <= certificate.sup_error,
        lower_bound_holds: result.w0_star >= lp.w0_min - certificate.sup_error,
        certificate,
        exact_family_minimum: family_min,
        family_gap: family_min - lp.w0_min,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const TREE: &str = r#"
        seed = 5
        epsilon = 0.1
        delta = 0.05
        crosscheck_samples = 20000

        [scenario]
        model = "tree"
        horizon = 2
        s0 = 10.0
        lower = -0.5
        upper = 1.0
        branches = [
            { driver = 1.0, prob = 0.375, growth = 1.25 },
            { driver = -1.0, prob = 0.625, growth = 0.85 },
        ]

        [[risk]]
        kind = "tree-product"
        probs = [0.6, 0.4]
        alpha = 1.0

        [[risk]]
        kind = "tree-product"
        probs = [0.2, 0.8]
        alpha = 0.5

        [grid]
        box = [[-2.0, 2.0], [-2.0, 2.0]]
        points = 9
        rounds = 1
    "#;

    #[test]
    fn run_is_reproducible_and_has_an_oracle_block() {
        let cfg = RunConfig::from_toml_str(TREE).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let a = cmd_run(&cfg, Some(dir.path()), None).unwrap();
        let b = cmd_run(&cfg, None, None).unwrap();
        assert_eq!(a.to_json(), b.to_json());
        let written = std::fs::read_to_string(dir.path().join(REPORT_FILE)).unwrap();
        assert_eq!(written, a.to_json());
        let oracle = a.oracle.clone().unwrap();
        assert!(oracle.family_gap >= -1e-12);
        assert!(a.to_text().contains("certificate"));
    }

    #[test]
    fn eval_rejects_wrong_dimension() {
        let cfg = RunConfig::from_toml_str(TREE).unwrap();
        assert!(matches!(cmd_eval(&cfg, &[0.0], 0.0, None), Err(Error::Argument(_))));
    }

    #[test]
    fn stale_bank_is_refused() {
        let cfg = RunConfig::from_toml_str(TREE).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bank.bin");
        cmd_sample(&cfg, None, Some(&path), false).unwrap();
        assert!(cmd_eval(&cfg, &[0.0, 0.0], 0.0, Some(&path)).is_ok());
        let other = RunConfig::from_toml_str(&TREE.replace("seed = 5", "seed = 6")).unwrap();
        assert!(matches!(
            cmd_eval(&other, &[0.0, 0.0], 0.0, Some(&path)),
            Err(Error::Certification(_))
        ));
    }
}
