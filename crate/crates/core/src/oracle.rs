//! Exact counterparts on finite trees.
//!
//! Everything the Monte-Carlo pipeline estimates can be summed exactly on
//! a small tree: the tilted probabilities are
//! `(1/d) sum_{path, t} P(path) v_t^{+/-} eta(lambda_t(s))` because
//! `P(lambda - Z > 0 | path, t) = eta(lambda)`. The minimal capital over
//! all adapted strategies is a linear program in one holding per node.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::market::{DriverPath, MarketScenario, StrategyRule, Tree};
use crate::risk::{sup_with_index, RiskSpec};
use crate::search::{refine, GridSpec};
use crate::simplex::{LinearProgram, Relation};
use crate::weights::{dot, Eta, TiltedWeights};
use crate::Sign;

/// Largest tree enumerated by [`ExactPipeline`].
pub const MAX_EXACT_PATHS: usize = 10_000;
/// Largest tree accepted by [`min_capital_lp`].
pub const MAX_LP_NODES: usize = 500;

fn require_tree<'a>(scenario: &'a MarketScenario, op: &'static str) -> Result<&'a Tree> {
    scenario.as_tree().ok_or(Error::UnsupportedKind {
        op,
        kind: scenario.kind().name(),
    })
}

/// Exact pipeline quantities for one tree.
#[derive(Debug, Clone)]
pub struct ExactPipeline {
    weights: TiltedWeights,
    /// `(path, P(path), f_i(path) for every i)`.
    paths: Vec<(DriverPath, f64, Vec<f64>)>,
    /// `features[path][t]` is `(v_t(f_1), ..., v_t(f_m))`.
    features: Vec<Vec<Vec<f64>>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExactPoint {
    pub s: Vec<f64>,
    /// `E(W(xi(s)) f_i)`.
    pub expectations: Vec<f64>,
    /// `-E(W(xi(s)) f_i) + alpha_i`.
    pub terms: Vec<f64>,
    /// `rho(W(xi(s)))`, the exact minimal capital for this `s`.
    pub rho: f64,
    pub argmax: usize,
    /// `(i, sign, (mu_i^sign x eta){lambda(s) - Z > 0})` for nonzero measures.
    pub tilted: Vec<(usize, Sign, f64)>,
}

impl ExactPipeline {
    pub fn new(weights: &TiltedWeights) -> Result<Self> {
        let scenario = weights.scenario();
        let tree = require_tree(scenario, "exact_pipeline")?;
        let count = tree.path_count().unwrap_or(usize::MAX);
        if count > MAX_EXACT_PATHS {
            return Err(Error::SizeLimit {
                what: "exact pipeline path count",
                size: count,
                limit: MAX_EXACT_PATHS,
            });
        }
        let mut paths = Vec::with_capacity(count);
        let mut features = Vec::with_capacity(count);
        for (path, prob) in scenario.enumerate_paths()? {
            let f = weights
                .spec()
                .measures
                .iter()
                .map(|m| m.density.eval(scenario, &path))
                .collect();
            features.push(
                (0..scenario.horizon())
                    .map(|t| weights.features(&path, t))
                    .collect::<Result<Vec<_>>>()?,
            );
            paths.push((path, prob, f));
        }
        Ok(Self {
            weights: weights.clone(),
            paths,
            features,
        })
    }

    pub fn weights(&self) -> &TiltedWeights {
        &self.weights
    }

    fn check_dim(&self, s: &[f64]) -> Result<()> {
        if s.len() != self.weights.m() {
            return Err(Error::DimensionMismatch {
                expected: self.weights.m(),
                got: s.len(),
            });
        }
        Ok(())
    }

    /// `(mu_i^sign x eta){lambda(s) - Z > 0}`.
    pub fn tilted_probability(&self, i: usize, sign: Sign, s: &[f64], eta: Eta) -> Result<f64> {
        self.check_dim(s)?;
        let d = self.weights.measure(i).normalizer(sign);
        if d <= 0.0 {
            return Err(Error::ZeroMeasure { measure: i, sign });
        }
        let mut total = 0.0;
        for ((_, prob, _), feats) in self.paths.iter().zip(&self.features) {
            for f in feats {
                total += prob * sign.part(f[i]) * eta.cdf(dot(f, s));
            }
        }
        Ok(total / d)
    }

    /// `xi_t(s)` along path `k`.
    fn holdings(&self, k: usize, s: &[f64], eta: Eta) -> Vec<f64> {
        let path = &self.paths[k].0;
        self.features[k]
            .iter()
            .enumerate()
            .map(|(t, f)| {
                let (a, b) = self.weights.scenario().bounds_at(t, path.prefix(t));
                ((b - a) * eta.cdf(dot(f, s)) + a).clamp(a, b)
            })
            .collect()
    }

    /// Every exact quantity at `s`.
    pub fn point(&self, s: &[f64], eta: Eta) -> Result<ExactPoint> {
        self.check_dim(s)?;
        let m = self.weights.m();
        let mut expectations = vec![0.0; m];
        for (k, (path, prob, f)) in self.paths.iter().enumerate() {
            let xi = self.holdings(k, s, eta);
            let w = self.weights.scenario().wealth_increment(path, &xi)?;
            for (e, fi) in expectations.iter_mut().zip(f) {
                *e += prob * fi * w;
            }
        }
        let terms: Vec<f64> = expectations
            .iter()
            .zip(&self.weights.spec().measures)
            .map(|(e, m)| -e + m.alpha)
            .collect();
        let (rho, argmax) = sup_with_index(&terms);
        let tilted = self
            .weights
            .nonzero_pairs()
            .into_iter()
            .map(|(i, sign)| Ok((i, sign, self.tilted_probability(i, sign, s, eta)?)))
            .collect::<Result<_>>()?;
        Ok(ExactPoint {
            s: s.to_vec(),
            expectations,
            terms,
            rho,
            argmax,
            tilted,
        })
    }

    /// `rho(W(xi(s)))` only.
    pub fn rho(&self, s: &[f64], eta: Eta) -> Result<f64> {
        Ok(self.point(s, eta)?.rho)
    }

    /// `D_i(s)` assembled from exact tilted probabilities; equals
    /// `-E(W(xi(s)) f_i) + alpha_i`.
    pub fn d_terms(&self, s: &[f64], eta: Eta) -> Result<Vec<f64>> {
        let point = self.point(s, eta)?;
        let mut out: Vec<f64> = (0..self.weights.m())
            .map(|i| self.weights.spec().measures[i].alpha - self.weights.measure(i).c)
            .collect();
        for (i, sign, p) in point.tilted {
            let d = self.weights.measure(i).normalizer(sign);
            match sign {
                Sign::Plus => out[i] -= d * p,
                Sign::Minus => out[i] += d * p,
            }
        }
        Ok(out)
    }

    /// Exact minimum of `rho(W(xi(s)))` over `grid` and its refinements,
    /// refined the same way as the sampled search.
    pub fn grid_minimum(&self, grid: &GridSpec, eta: Eta) -> Result<ExactPoint> {
        let m = self.weights.m();
        let mut bounds = grid.bounds.clone();
        let mut best: Option<ExactPoint> = None;
        for round in 0..=grid.refine_rounds {
            if round > 0 {
                let b = best.as_ref().expect("earlier round");
                let centre: Vec<f64> = grid.active_dims.iter().map(|&d| b.s[d]).collect();
                bounds = refine(&bounds, &centre, grid.shrink_factor, &grid.bounds);
            }
            for s in grid.nodes(&bounds, m) {
                let p = self.point(&s, eta)?;
                if best.as_ref().is_none_or(|b| p.rho < b.rho) {
                    best = Some(p);
                }
            }
        }
        best.ok_or_else(|| Error::Argument("empty grid".into()))
    }
}

/// Exact quantities at every `s` of `grid`.
pub fn exact_pipeline(weights: &TiltedWeights, grid: &[Vec<f64>], eta: Eta) -> Result<Vec<ExactPoint>> {
    let pipeline = ExactPipeline::new(weights)?;
    grid.iter().map(|s| pipeline.point(s, eta)).collect()
}

/// Holdings fixed per tree node.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeHoldings {
    pub tree: Tree,
    /// `levels[t][node]`, nodes in [`Tree::node_index`] order.
    pub levels: Vec<Vec<f64>>,
}

impl StrategyRule for NodeHoldings {
    fn holdings(&self, path: &DriverPath) -> Result<Vec<f64>> {
        (0..path.horizon())
            .map(|t| Ok(self.levels[t][self.tree.node_index(path.prefix(t))?]))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LpCapital {
    pub w0_min: f64,
    pub holdings: NodeHoldings,
    /// `E(W(xi) f_i)` at the optimum.
    pub expectations: Vec<f64>,
}

/// Minimal capital over all adapted strategies:
/// minimise `w0` subject to `w0 + E(W(xi) f_i) >= alpha_i` and
/// `a_t <= xi_node <= b_t`, with one holding per node.
pub fn min_capital_lp(scenario: &MarketScenario, spec: &RiskSpec) -> Result<LpCapital> {
    let tree = require_tree(scenario, "min_capital_lp")?;
    spec.validate(scenario)?;
    let k = tree.branches.len();
    let horizon = tree.horizon;
    let node_count: usize = (0..horizon).map(|t| k.pow(t as u32)).sum();
    if node_count > MAX_LP_NODES {
        return Err(Error::SizeLimit {
            what: "LP node count",
            size: node_count,
            limit: MAX_LP_NODES,
        });
    }
    let offsets: Vec<usize> = (0..horizon)
        .scan(0, |acc, t| {
            let o = *acc;
            *acc += k.pow(t as u32);
            Some(o)
        })
        .collect();
    let mut lower = vec![0.0; node_count];
    let mut upper = vec![0.0; node_count];
    // g[i][n] = E[1_n f_i (S_{t+1} - S_t)]
    let mut g = vec![vec![0.0; node_count]; spec.len()];
    for (path, prob) in scenario.enumerate_paths()? {
        for (t, offset) in offsets.iter().enumerate() {
            let n = offset + tree.node_index(path.prefix(t))?;
            let (a, b) = scenario.bounds_at(t, path.prefix(t));
            lower[n] = a;
            upper[n] = b;
            for (gi, m) in g.iter_mut().zip(&spec.measures) {
                gi[n] += prob * m.density.eval(scenario, &path) * path.increment(t);
            }
        }
    }
    // variables: y_n = xi_n - a_n (node_count), then w_plus, w_minus
    let nv = node_count + 2;
    let mut objective = vec![0.0; nv];
    objective[node_count] = 1.0;
    objective[node_count + 1] = -1.0;
    let mut lp = LinearProgram::new(objective);
    for (gi, m) in g.iter().zip(&spec.measures) {
        let mut row = gi.clone();
        row.push(1.0);
        row.push(-1.0);
        let shift: f64 = gi.iter().zip(&lower).map(|(g, a)| g * a).sum();
        lp.constrain(row, Relation::Ge, m.alpha - shift);
    }
    for n in 0..node_count {
        let mut row = vec![0.0; nv];
        row[n] = 1.0;
        lp.constrain(row, Relation::Le, upper[n] - lower[n]);
    }
    let sol = lp.solve()?;
    let xi: Vec<f64> = (0..node_count)
        .map(|n| (sol.x[n] + lower[n]).clamp(lower[n], upper[n]))
        .collect();
    let levels = (0..horizon)
        .map(|t| xi[offsets[t]..offsets[t] + k.pow(t as u32)].to_vec())
        .collect();
    let expectations = g
        .iter()
        .map(|gi| gi.iter().zip(&xi).map(|(g, x)| g * x).sum())
        .collect();
    Ok(LpCapital {
        w0_min: sol.objective,
        holdings: NodeHoldings {
            tree: tree.clone(),
            levels,
        },
        expectations,
    })
}
