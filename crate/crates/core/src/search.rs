//! Grid search for the minimal capital.
//!
//! `rho_hat(s)` is evaluated on a product grid over the active dimensions
//! (measures with a nonzero weight process; the others do not move
//! `lambda`). Each refinement round re-centres a shrunken box at the best
//! point found so far. One bank serves every round: its certificate holds
//! for all `s` at once, so nothing is resampled.

use std::cmp::Ordering;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimator::{check_bank, rho_hat_batch, Certificate, RhoEstimate};
use crate::sampler::SampleBank;
use crate::weights::TiltedWeights;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    /// Measure indices searched over, increasing.
    pub active_dims: Vec<usize>,
    /// `(lo, hi)` per active dimension.
    pub bounds: Vec<(f64, f64)>,
    /// Grid points per dimension; a single point sits at the box centre.
    pub points_per_dim: usize,
    /// Refinements after the initial grid.
    pub refine_rounds: usize,
    pub shrink_factor: f64,
    /// Stop refining once a round improves the minimum by less than this.
    pub tol: f64,
}

impl GridSpec {
    /// `[-B, B]` per active dimension with
    /// `B = 10 max(1, max_i alpha_i / (d_j^+ + d_j^-))`.
    pub fn default_for(weights: &TiltedWeights) -> Self {
        let max_alpha = weights.spec().alphas().into_iter().fold(f64::NEG_INFINITY, f64::max);
        let active_dims = weights.active_dims();
        let bounds = active_dims
            .iter()
            .map(|&j| {
                let c = weights.measure(j);
                let b = 10.0 * (max_alpha / (c.d_plus + c.d_minus)).max(1.0);
                (-b, b)
            })
            .collect();
        Self {
            active_dims,
            bounds,
            points_per_dim: 21,
            refine_rounds: 3,
            shrink_factor: 0.25,
            tol: 0.0,
        }
    }

    pub fn validate(&self, weights: &TiltedWeights) -> Result<()> {
        if self.active_dims != weights.active_dims() {
            return Err(Error::Config(format!(
                "grid dimensions {:?} differ from the active measures {:?}",
                one_based(&self.active_dims),
                one_based(&weights.active_dims())
            )));
        }
        if self.bounds.len() != self.active_dims.len() {
            return Err(Error::DimensionMismatch {
                expected: self.active_dims.len(),
                got: self.bounds.len(),
            });
        }
        if self.bounds.iter().any(|&(lo, hi)| !(lo < hi && lo.is_finite() && hi.is_finite())) {
            return Err(Error::Config("grid box needs lo < hi in every dimension".into()));
        }
        if self.points_per_dim == 0 {
            return Err(Error::Config("points_per_dim must be positive".into()));
        }
        if !(self.shrink_factor > 0.0 && self.shrink_factor <= 1.0) {
            return Err(Error::Config("shrink_factor must lie in (0, 1]".into()));
        }
        if self.tol.is_nan() || self.tol < 0.0 {
            return Err(Error::Config("tol must be nonnegative".into()));
        }
        Ok(())
    }

    /// Grid nodes of `bounds` as full `m`-vectors, lexicographic order.
    pub fn nodes(&self, bounds: &[(f64, f64)], m: usize) -> Vec<Vec<f64>> {
        let axes: Vec<Vec<f64>> = bounds
            .iter()
            .map(|&(lo, hi)| linspace(lo, hi, self.points_per_dim))
            .collect();
        let mut out = vec![vec![0.0; m]];
        for (axis, &dim) in axes.iter().zip(&self.active_dims) {
            out = out
                .into_iter()
                .flat_map(|s| {
                    axis.iter().map(move |&x| {
                        let mut s = s.clone();
                        s[dim] = x;
                        s
                    })
                })
                .collect();
        }
        out
    }
}

fn one_based(dims: &[usize]) -> Vec<usize> {
    dims.iter().map(|d| d + 1).collect()
}

fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![0.5 * (lo + hi)];
    }
    let step = (hi - lo) / (n - 1) as f64;
    (0..n)
        .map(|k| if k == n - 1 { hi } else { lo + step * k as f64 })
        .collect()
}

/// Box of widths `shrink * width` centred at `best`, moved inside `outer`
/// if it sticks out. Widths never exceed the outer box.
pub fn refine(
    current: &[(f64, f64)],
    best: &[f64],
    shrink: f64,
    outer: &[(f64, f64)],
) -> Vec<(f64, f64)> {
    current
        .iter()
        .zip(best)
        .zip(outer)
        .map(|((&(lo, hi), &x), &(olo, ohi))| {
            let half = (0.5 * shrink * (hi - lo)).min(0.5 * (ohi - olo));
            let (mut a, mut b) = (x - half, x + half);
            if a < olo {
                b += olo - a;
                a = olo;
            }
            if b > ohi {
                a -= b - ohi;
                b = ohi;
            }
            (a.max(olo), b)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundTrace {
    pub round: usize,
    pub bounds: Vec<(f64, f64)>,
    pub best_s: Vec<f64>,
    pub best_rho_hat: f64,
    pub points: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluatedPoint {
    pub round: usize,
    pub s: Vec<f64>,
    pub rho_hat: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchResult {
    /// Estimated minimal capital, `rho_hat(s_star)`.
    pub w0_star: f64,
    pub s_star: Vec<f64>,
    pub estimate: RhoEstimate,
    pub rounds: Vec<RoundTrace>,
    pub evaluated: Vec<EvaluatedPoint>,
    pub certificate: Certificate,
    pub note: Option<String>,
}

fn lexicographic(a: &[f64], b: &[f64]) -> Ordering {
    a.iter()
        .zip(b)
        .map(|(x, y)| x.total_cmp(y))
        .find(|o| o.is_ne())
        .unwrap_or(Ordering::Equal)
}

/// True when `a` beats `b`: smaller `rho_hat`, ties to the smaller `s`.
fn better(a: &RhoEstimate, b: &RhoEstimate) -> bool {
    match a.rho_hat.total_cmp(&b.rho_hat) {
        Ordering::Less => true,
        Ordering::Greater => false,
        Ordering::Equal => lexicographic(&a.s, &b.s) == Ordering::Less,
    }
}

/// Minimises `rho_hat` over the grid and its refinements.
pub fn run_search(weights: &TiltedWeights, bank: &SampleBank, grid: &GridSpec) -> Result<SearchResult> {
    check_bank(weights, bank)?;
    let m = weights.m();
    let certificate = bank.certificate();
    if grid.active_dims.is_empty() && weights.active_dims().is_empty() {
        let s = vec![0.0; m];
        let estimate = rho_hat_batch(bank, std::slice::from_ref(&s))?.remove(0);
        return Ok(SearchResult {
            w0_star: estimate.rho_hat,
            s_star: s.clone(),
            rounds: vec![],
            evaluated: vec![EvaluatedPoint {
                round: 0,
                s,
                rho_hat: estimate.rho_hat,
            }],
            estimate,
            certificate,
            note: Some(
                "no active dimensions: every weight process vanishes, so the strategy cannot move \
                 rho and w0* = max_i (alpha_i - c_i)"
                    .into(),
            ),
        });
    }
    grid.validate(weights)?;
    let mut bounds = grid.bounds.clone();
    let mut best: Option<RhoEstimate> = None;
    let mut rounds = Vec::new();
    let mut evaluated = Vec::new();
    for round in 0..=grid.refine_rounds {
        if round > 0 {
            let centre = best.as_ref().expect("earlier round").s.clone();
            let centre: Vec<f64> = grid.active_dims.iter().map(|&d| centre[d]).collect();
            bounds = refine(&bounds, &centre, grid.shrink_factor, &grid.bounds);
        }
        let nodes = grid.nodes(&bounds, m);
        let estimates = rho_hat_batch(bank, &nodes)?;
        let mut round_best: Option<&RhoEstimate> = None;
        for e in &estimates {
            if round_best.is_none_or(|b| better(e, b)) {
                round_best = Some(e);
            }
            evaluated.push(EvaluatedPoint {
                round,
                s: e.s.clone(),
                rho_hat: e.rho_hat,
            });
        }
        let round_best = round_best.expect("nonempty grid").clone();
        let previous = best.as_ref().map(|b| b.rho_hat);
        rounds.push(RoundTrace {
            round,
            bounds: bounds.clone(),
            best_s: round_best.s.clone(),
            best_rho_hat: round_best.rho_hat,
            points: nodes.len(),
        });
        if best.as_ref().is_none_or(|b| better(&round_best, b)) {
            best = Some(round_best);
        }
        if let Some(prev) = previous {
            let now = best.as_ref().expect("set above").rho_hat;
            if grid.tol > 0.0 && prev - now < grid.tol {
                break;
            }
        }
    }
    let estimate = best.expect("at least one round");
    Ok(SearchResult {
        w0_star: estimate.rho_hat,
        s_star: estimate.s.clone(),
        estimate,
        rounds,
        evaluated,
        certificate,
        note: None,
    })
}

impl SearchResult {
    /// Every evaluated point: `round, s_1..s_m, rho_hat`.
    pub fn write_trace_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        let m = self.s_star.len();
        let mut head = vec!["round".to_string()];
        head.extend((1..=m).map(|i| format!("s{i}")));
        head.push("rho_hat".into());
        w.write_record(&head)?;
        for p in &self.evaluated {
            let mut row = vec![p.round.to_string()];
            row.extend(p.s.iter().map(f64::to_string));
            row.push(p.rho_hat.to_string());
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn summary(&self) -> String {
        let mut out = String::new();
        for r in &self.rounds {
            let _ = writeln!(
                out,
                "round {}: {} points, box {:?}, best rho_hat {:.6} at {:?}",
                r.round, r.points, r.bounds, r.best_rho_hat, r.best_s
            );
        }
        let _ = writeln!(out, "w0* = {:.6} at s* = {:?}", self.w0_star, self.s_star);
        if let Some(note) = &self.note {
            let _ = writeln!(out, "note: {note}");
        }
        out
    }
}
