//! Weight processes and the parametric strategy family.
//!
//! For each scenario density `f_i` the adapted process
//!
//! ```text
//! v_t(f_i) = (b_t - a_t) E[(S_{t+1} - S_t) f_i | F_t]
//! ```
//!
//! turns the expected terminal wealth under `Q_i` into a linear functional of
//! the normalised holding `phi_t = (xi_t - a_t) / (b_t - a_t)`:
//! `E(W f_i) = sum_t E[v_t(f_i) phi_t] + c(f_i)` with
//! `c(f) = E[f sum_t a_t (S_{t+1} - S_t)]`. The strategy family is
//! `xi_t(s) = (b_t - a_t) eta(lambda_t(s)) + a_t`, `lambda_t(s) = sum_i s_i v_t(f_i)`.

use std::sync::Arc;

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::market::{DriverPath, MarketScenario, Model, StrategyRule};
use crate::risk::{Density, RiskSpec};
use crate::rng::{stream, stream_id, Purpose};
use crate::Sign;

/// Continuous distribution function used to smooth the threshold.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Eta {
    /// Standard normal CDF.
    #[default]
    Normal,
    /// Standard logistic CDF `1 / (1 + e^-x)`.
    Logistic,
}

impl Eta {
    pub fn cdf(self, x: f64) -> f64 {
        match self {
            Eta::Normal => 0.5 * libm::erfc(-x / std::f64::consts::SQRT_2),
            Eta::Logistic => {
                if x >= 0.0 {
                    1.0 / (1.0 + (-x).exp())
                } else {
                    let e = x.exp();
                    e / (1.0 + e)
                }
            }
        }
    }

    pub fn sample<R: Rng + ?Sized>(self, rng: &mut R) -> f64 {
        match self {
            Eta::Normal => rng.sample(StandardNormal),
            Eta::Logistic => {
                // open interval keeps the log finite
                let u: f64 = loop {
                    let u: f64 = rng.random();
                    if u > 0.0 {
                        break u;
                    }
                };
                (u / (1.0 - u)).ln()
            }
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Eta::Normal => "normal",
            Eta::Logistic => "logistic",
        }
    }
}

/// How a constant was obtained.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "route", rename_all = "kebab-case")]
pub enum Provenance {
    ClosedForm,
    FiniteTree,
    /// Estimated; these constants do not carry a certificate.
    MonteCarlo {
        n: usize,
        c_std_error: f64,
        d_plus_std_error: f64,
        d_minus_std_error: f64,
    },
}

impl Provenance {
    pub fn is_exact(&self) -> bool {
        !matches!(self, Provenance::MonteCarlo { .. })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeasureConstants {
    pub c: f64,
    pub d_plus: f64,
    pub d_minus: f64,
    /// `E[v_t^+(f_i)]` for each period; sums to `d_plus`.
    pub plus_by_period: Vec<f64>,
    /// `E[v_t^-(f_i)]` for each period; sums to `d_minus`.
    pub minus_by_period: Vec<f64>,
    pub provenance: Provenance,
}

impl MeasureConstants {
    pub fn normalizer(&self, sign: Sign) -> f64 {
        match sign {
            Sign::Plus => self.d_plus,
            Sign::Minus => self.d_minus,
        }
    }

    pub fn by_period(&self, sign: Sign) -> &[f64] {
        match sign {
            Sign::Plus => &self.plus_by_period,
            Sign::Minus => &self.minus_by_period,
        }
    }

    /// `E[v_t(f_i)]`.
    pub fn expected_weight(&self, t: usize) -> f64 {
        self.plus_by_period[t] - self.minus_by_period[t]
    }
}

/// Per-node weights of a finite tree: `levels[t][node][i]`.
#[derive(Debug, Clone)]
struct TreeTable {
    levels: Vec<Vec<Vec<f64>>>,
}

/// The weight processes of a `(scenario, spec)` pair together with their
/// normalising constants. Immutable once computed.
#[derive(Debug, Clone)]
pub struct TiltedWeights {
    scenario: Arc<MarketScenario>,
    spec: Arc<RiskSpec>,
    constants: Vec<MeasureConstants>,
    tree_table: Option<TreeTable>,
}

/// `v_t(f_i)` at the prefix of `path`.
///
/// Finite trees are handled by summing over every continuation of the
/// prefix; Gaussian-driver scenarios use the closed form
/// `(b_t - a_t) L_t S_t (g_i - 1)`, where `L_t` is the density process of
/// `Q_i` and `g_i` its one-step mean growth.
pub fn v_weight(
    scenario: &MarketScenario,
    spec: &RiskSpec,
    i: usize,
    path: &DriverPath,
    t: usize,
) -> Result<f64> {
    let density = &spec
        .measures
        .get(i)
        .ok_or_else(|| Error::Argument(format!("measure index {i} out of range")))?
        .density;
    if t >= scenario.horizon() {
        return Err(Error::Argument(format!("period {t} is past the horizon")));
    }
    let prefix = path.prefix(t);
    let (lower, upper) = scenario.bounds_at(t, prefix);
    match scenario.model() {
        Model::Tree(tree) => {
            let k = tree.branches.len();
            let rest = scenario.horizon() - t;
            let s_t = scenario.price(prefix)?;
            let (mut total, mut scale) = (0.0, 0.0);
            let mut drivers = prefix.to_vec();
            drivers.resize(scenario.horizon(), 0.0);
            for cont in 0..k.pow(rest as u32) {
                let branches = tree.node_branches(rest, cont);
                let mut prob = 1.0;
                for (slot, &b) in branches.iter().enumerate() {
                    drivers[t + slot] = tree.branches[b].driver;
                    prob *= tree.branches[b].prob;
                }
                let next = s_t * tree.branches[branches[0]].growth;
                let term = prob * density.density_process(scenario, &drivers) * (next - s_t);
                total += term;
                scale += term.abs();
            }
            // a martingale step sums to rounding noise; keep it exactly zero so
            // that aleph is not inflated
            if total.abs() <= 1e-12 * scale {
                total = 0.0;
            }
            Ok((upper - lower) * total)
        }
        Model::Gbm(_) => match density {
            Density::Unit | Density::NormalMeanShift { .. } => {
                Ok(closed_form_weight(scenario, density, prefix, lower, upper))
            }
            Density::TreeProduct { .. } => Err(Error::MissingEvaluator {
                measure: i,
                reason: "tree-product densities have no evaluator on continuous drivers".into(),
            }),
        },
    }
}

fn closed_form_weight(
    scenario: &MarketScenario,
    density: &Density,
    prefix: &[f64],
    lower: f64,
    upper: f64,
) -> f64 {
    let growth = density.mean_growth(scenario);
    let price = scenario.price(prefix).expect("gaussian prices are total");
    (upper - lower) * density.density_process(scenario, prefix) * price * (growth - 1.0)
}

/// Fills `c_i`, `d_i^+`, `d_i^-` and `aleph`.
///
/// Finite trees are summed exactly. Gaussian-driver scenarios with
/// per-period bounds use closed forms; with path-dependent bounds a Monte
/// Carlo `budget` is required and the estimates are tagged as such.
pub fn compute_constants(
    scenario: Arc<MarketScenario>,
    spec: Arc<RiskSpec>,
    budget: Option<usize>,
    seed: u64,
) -> Result<TiltedWeights> {
    spec.validate(&scenario)?;
    let horizon = scenario.horizon();
    match scenario.model() {
        Model::Tree(tree) => {
            let k = tree.branches.len();
            let mut levels = Vec::with_capacity(horizon);
            let mut plus = vec![vec![0.0; horizon]; spec.len()];
            let mut minus = vec![vec![0.0; horizon]; spec.len()];
            for t in 0..horizon {
                let count = k.pow(t as u32);
                let mut level = Vec::with_capacity(count);
                for node in 0..count {
                    let branches = tree.node_branches(t, node);
                    let mut drivers: Vec<f64> =
                        branches.iter().map(|&b| tree.branches[b].driver).collect();
                    let prob = tree.prefix_probability(&drivers)?;
                    drivers.resize(horizon, tree.branches[0].driver);
                    let path = scenario.path_from_drivers(drivers)?;
                    let mut row = Vec::with_capacity(spec.len());
                    for i in 0..spec.len() {
                        let v = v_weight(&scenario, &spec, i, &path, t)?;
                        plus[i][t] += prob * v.max(0.0);
                        minus[i][t] += prob * (-v).max(0.0);
                        row.push(v);
                    }
                    level.push(row);
                }
                levels.push(level);
            }
            let paths = scenario.enumerate_paths()?;
            let constants = spec
                .measures
                .iter()
                .enumerate()
                .map(|(i, m)| {
                    let c = paths
                        .iter()
                        .map(|(path, p)| {
                            let lower_gain: f64 = (0..horizon)
                                .map(|t| scenario.bounds_at(t, path.prefix(t)).0 * path.increment(t))
                                .sum();
                            p * m.density.eval(&scenario, path) * lower_gain
                        })
                        .sum();
                    MeasureConstants {
                        c,
                        d_plus: plus[i].iter().sum(),
                        d_minus: minus[i].iter().sum(),
                        plus_by_period: plus[i].clone(),
                        minus_by_period: minus[i].clone(),
                        provenance: Provenance::FiniteTree,
                    }
                })
                .collect();
            Ok(TiltedWeights {
                scenario,
                spec,
                constants,
                tree_table: Some(TreeTable { levels }),
            })
        }
        Model::Gbm(_) => {
            let constants = match scenario.bounds().per_period() {
                Some((lower, upper)) => spec
                    .measures
                    .iter()
                    .map(|m| closed_form_constants(&scenario, &m.density, lower, upper))
                    .collect(),
                None => {
                    let n = budget.ok_or_else(|| {
                        Error::Config(
                            "path-dependent bounds need a Monte-Carlo budget for the constants"
                                .into(),
                        )
                    })?;
                    if n < 2 {
                        return Err(Error::Config("constants budget must be at least 2".into()));
                    }
                    spec.measures
                        .iter()
                        .enumerate()
                        .map(|(i, m)| monte_carlo_constants(&scenario, &m.density, i, n, seed))
                        .collect()
                }
            };
            Ok(TiltedWeights {
                scenario,
                spec,
                constants,
                tree_table: None,
            })
        }
    }
}

fn closed_form_constants(
    scenario: &MarketScenario,
    density: &Density,
    lower: &[f64],
    upper: &[f64],
) -> MeasureConstants {
    let g = density.mean_growth(scenario);
    let s0 = scenario.s0();
    let horizon = scenario.horizon();
    let mut plus = Vec::with_capacity(horizon);
    let mut minus = Vec::with_capacity(horizon);
    let mut c = 0.0;
    for t in 0..horizon {
        // E_P[L_t S_t] = E^Q[S_t] = s0 g^t
        let drift = s0 * g.powi(t as i32) * (g - 1.0);
        let v = (upper[t] - lower[t]) * drift;
        plus.push(v.max(0.0));
        minus.push((-v).max(0.0));
        c += lower[t] * drift;
    }
    MeasureConstants {
        c,
        d_plus: plus.iter().sum(),
        d_minus: minus.iter().sum(),
        plus_by_period: plus,
        minus_by_period: minus,
        provenance: Provenance::ClosedForm,
    }
}

const CONSTANTS_CHUNK: usize = 8192;

fn monte_carlo_constants(
    scenario: &MarketScenario,
    density: &Density,
    measure: usize,
    n: usize,
    seed: u64,
) -> MeasureConstants {
    let horizon = scenario.horizon();
    let g = density.mean_growth(scenario);
    let chunks = n.div_ceil(CONSTANTS_CHUNK);
    // per chunk: sums and squared sums of (b_t - a_t) S_t per t, and of sum_t a_t S_t,
    // plus the squared sum of sum_t (b_t - a_t) S_t
    let partial: Vec<(Vec<f64>, f64, f64, f64, f64)> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = stream(seed, stream_id(Purpose::Constants, measure, Sign::Plus, c as u64));
            let len = CONSTANTS_CHUNK.min(n - c * CONSTANTS_CHUNK);
            let mut width_sum = vec![0.0; horizon];
            let (mut total, mut total_sq, mut low, mut low_sq) = (0.0, 0.0, 0.0, 0.0);
            for _ in 0..len {
                let path = density.sample_path_under(scenario, &mut rng);
                let (mut w_all, mut l_all) = (0.0, 0.0);
                for (t, slot) in width_sum.iter_mut().enumerate() {
                    let (a, b) = scenario.bounds_at(t, path.prefix(t));
                    let w = (b - a) * path.prices[t];
                    *slot += w;
                    w_all += w;
                    l_all += a * path.prices[t];
                }
                total += w_all;
                total_sq += w_all * w_all;
                low += l_all;
                low_sq += l_all * l_all;
            }
            (width_sum, total, total_sq, low, low_sq)
        })
        .collect();
    let nf = n as f64;
    let mut width = vec![0.0; horizon];
    let (mut total, mut total_sq, mut low, mut low_sq) = (0.0, 0.0, 0.0, 0.0);
    for (w, a, b, c, d) in &partial {
        for (acc, x) in width.iter_mut().zip(w) {
            *acc += x;
        }
        total += a;
        total_sq += b;
        low += c;
        low_sq += d;
    }
    let se = |sum: f64, sq: f64| {
        let mean = sum / nf;
        ((sq / nf - mean * mean).max(0.0) / (nf - 1.0)).sqrt()
    };
    let scale = g - 1.0;
    let by_period: Vec<f64> = width.iter().map(|w| w / nf * scale).collect();
    let plus: Vec<f64> = by_period.iter().map(|v| v.max(0.0)).collect();
    let minus: Vec<f64> = by_period.iter().map(|v| (-v).max(0.0)).collect();
    let d_se = se(total, total_sq) * scale.abs();
    MeasureConstants {
        c: low / nf * scale,
        d_plus: plus.iter().sum(),
        d_minus: minus.iter().sum(),
        plus_by_period: plus,
        minus_by_period: minus,
        provenance: Provenance::MonteCarlo {
            n,
            c_std_error: se(low, low_sq) * scale.abs(),
            d_plus_std_error: if scale > 0.0 { d_se } else { 0.0 },
            d_minus_std_error: if scale < 0.0 { d_se } else { 0.0 },
        },
    }
}

impl TiltedWeights {
    /// Assembles weights from externally supplied constants.
    pub fn from_parts(
        scenario: Arc<MarketScenario>,
        spec: Arc<RiskSpec>,
        constants: Vec<MeasureConstants>,
    ) -> Result<Self> {
        if constants.len() != spec.len() {
            return Err(Error::DimensionMismatch {
                expected: spec.len(),
                got: constants.len(),
            });
        }
        for c in &constants {
            if !(c.d_plus >= 0.0 && c.d_minus >= 0.0) {
                return Err(Error::Config("normalizers must be nonnegative".into()));
            }
        }
        Ok(Self {
            scenario,
            spec,
            constants,
            tree_table: None,
        })
    }

    pub fn scenario(&self) -> &MarketScenario {
        &self.scenario
    }

    pub fn spec(&self) -> &RiskSpec {
        &self.spec
    }

    pub fn scenario_arc(&self) -> &Arc<MarketScenario> {
        &self.scenario
    }

    pub fn spec_arc(&self) -> &Arc<RiskSpec> {
        &self.spec
    }

    pub fn m(&self) -> usize {
        self.spec.len()
    }

    pub fn constants(&self) -> &[MeasureConstants] {
        &self.constants
    }

    pub fn measure(&self, i: usize) -> &MeasureConstants {
        &self.constants[i]
    }

    /// Number of nonzero tilted measures.
    pub fn aleph(&self) -> usize {
        self.nonzero_pairs().len()
    }

    /// Every `(i, sign)` with a strictly positive normalizer, `+` first.
    pub fn nonzero_pairs(&self) -> Vec<(usize, Sign)> {
        let mut out = Vec::new();
        for (i, c) in self.constants.iter().enumerate() {
            for sign in [Sign::Plus, Sign::Minus] {
                if c.normalizer(sign) > 0.0 {
                    out.push((i, sign));
                }
            }
        }
        out
    }

    /// Measure indices whose weight process is not identically zero.
    pub fn active_dims(&self) -> Vec<usize> {
        (0..self.m())
            .filter(|&i| self.constants[i].d_plus > 0.0 || self.constants[i].d_minus > 0.0)
            .collect()
    }

    /// Whether every constant came from an exact route.
    pub fn is_exact(&self) -> bool {
        self.constants.iter().all(|c| c.provenance.is_exact())
    }

    pub fn v(&self, i: usize, path: &DriverPath, t: usize) -> Result<f64> {
        if let (Some(table), Some(tree)) = (&self.tree_table, self.scenario.as_tree()) {
            let node = tree.node_index(path.prefix(t))?;
            return Ok(table.levels[t][node][i]);
        }
        v_weight(&self.scenario, &self.spec, i, path, t)
    }

    /// `(v_1(path, t), ..., v_m(path, t))`.
    pub fn features(&self, path: &DriverPath, t: usize) -> Result<Vec<f64>> {
        if let (Some(table), Some(tree)) = (&self.tree_table, self.scenario.as_tree()) {
            let node = tree.node_index(path.prefix(t))?;
            return Ok(table.levels[t][node].clone());
        }
        (0..self.m()).map(|i| self.v(i, path, t)).collect()
    }

    /// Human-readable form of `lambda_t(s)` for this scenario.
    pub fn describe_lambda(&self, s: &[f64]) -> String {
        let mut terms = Vec::new();
        for (i, (&si, m)) in s.iter().zip(&self.spec.measures).enumerate() {
            if si == 0.0 || !self.active_dims().contains(&i) {
                continue;
            }
            let g = m.density.mean_growth(&self.scenario);
            let lt = match &m.density {
                Density::Unit => "1".to_string(),
                Density::NormalMeanShift { shift } => format!(
                    "exp({shift} * (z_1 + ... + z_t) - {} * t)",
                    0.5 * shift * shift
                ),
                Density::TreeProduct { .. } => format!("L{}_t", i + 1),
            };
            terms.push(format!("{si} * {} * {lt}", g - 1.0));
        }
        if terms.is_empty() {
            "lambda_t = 0".into()
        } else {
            format!("lambda_t = (b_t - a_t) * S_t * [{}]", terms.join(" + "))
        }
    }
}

/// The parameters `s` of `lambda_t(s)` and the smoothing CDF.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrategyParams {
    pub s: Vec<f64>,
    pub eta: Eta,
}

impl StrategyParams {
    pub fn new(s: Vec<f64>, eta: Eta) -> Self {
        Self { s, eta }
    }
}

/// `lambda_t(s) = sum_i s_i v_t(f_i)`.
pub fn lambda_process(
    weights: &TiltedWeights,
    params: &StrategyParams,
    path: &DriverPath,
    t: usize,
) -> Result<f64> {
    if params.s.len() != weights.m() {
        return Err(Error::DimensionMismatch {
            expected: weights.m(),
            got: params.s.len(),
        });
    }
    let features = weights.features(path, t)?;
    Ok(dot(&features, &params.s))
}

/// `xi_t(s) = (b_t - a_t) eta(lambda_t(s)) + a_t` along `path`.
pub fn strategy_from_params(
    weights: &TiltedWeights,
    params: &StrategyParams,
    path: &DriverPath,
) -> Result<Vec<f64>> {
    (0..weights.scenario().horizon())
        .map(|t| {
            let lambda = lambda_process(weights, params, path, t)?;
            let (a, b) = weights.scenario().bounds_at(t, path.prefix(t));
            Ok(((b - a) * params.eta.cdf(lambda) + a).clamp(a, b))
        })
        .collect()
}

/// Left-to-right dot product; the estimator uses the same order.
pub(crate) fn dot(features: &[f64], s: &[f64]) -> f64 {
    features.iter().zip(s).fold(0.0, |acc, (f, x)| acc + f * x)
}

/// `xi(s)` as a [`StrategyRule`].
#[derive(Debug, Clone, Copy)]
pub struct ParametricStrategy<'a> {
    pub weights: &'a TiltedWeights,
    pub params: &'a StrategyParams,
}

impl StrategyRule for ParametricStrategy<'_> {
    fn holdings(&self, path: &DriverPath) -> Result<Vec<f64>> {
        strategy_from_params(self.weights, self.params, path)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::market::{Bounds, Branch, Gbm, Tree};
    use crate::risk::ScenarioMeasure;
    use std::f64::consts::E;

    fn paper() -> TiltedWeights {
        compute_constants(
            Arc::new(MarketScenario::paper_gbm()),
            Arc::new(RiskSpec::paper_gbm()),
            None,
            0,
        )
        .unwrap()
    }

    #[test]
    fn paper_weight_closed_forms() {
        let w = paper();
        let scenario = MarketScenario::paper_gbm();
        let path = scenario.path_from_drivers(vec![0.3, -1.2, 0.7]).unwrap();
        let k = 4.0 * (E - 1.0);
        for t in 0..3 {
            let sum: f64 = path.drivers[..t].iter().sum();
            let v1 = k * (2.0 * sum - t as f64).exp();
            let v2 = -k * (-(t as f64) - 1.0).exp();
            assert!((w.v(0, &path, t).unwrap() - v1).abs() < 1e-12 * v1.abs());
            assert!((w.v(1, &path, t).unwrap() - v2).abs() < 1e-12 * v2.abs());
            assert_eq!(w.v(2, &path, t).unwrap(), 0.0);
        }
    }

    #[test]
    fn paper_constants() {
        let w = paper();
        let c = w.constants();
        assert!((c[0].d_plus - 76.34).abs() < 0.01, "{}", c[0].d_plus);
        assert_eq!(c[0].d_minus, 0.0);
        assert_eq!(c[1].d_plus, 0.0);
        assert!((c[1].d_minus - 3.80).abs() < 0.01, "{}", c[1].d_minus);
        assert_eq!((c[2].d_plus, c[2].d_minus), (0.0, 0.0));
        assert_eq!(w.aleph(), 2);
        assert!(c.iter().all(|m| m.c == 0.0));
        for t in 0..3 {
            let expected = 4.0 * (E - 1.0) * (t as f64).exp();
            assert!((c[0].expected_weight(t) - expected).abs() < 1e-10);
        }
        assert_eq!(w.active_dims(), vec![0, 1]);
    }

    #[test]
    fn degenerate_bounds_kill_every_weight() {
        let g = Gbm { horizon: 3, s0: 4.0, drift: 0.0, vol: 1.0 };
        let scenario = MarketScenario::new(Model::Gbm(g), Bounds::constant(3, 0.5, 0.5)).unwrap();
        let w = compute_constants(Arc::new(scenario), Arc::new(RiskSpec::paper_gbm()), None, 0).unwrap();
        assert_eq!(w.aleph(), 0);
        let path = w.scenario().path_from_drivers(vec![1.0, 2.0, 3.0]).unwrap();
        for i in 0..3 {
            for t in 0..3 {
                assert_eq!(w.v(i, &path, t).unwrap(), 0.0);
            }
        }
    }

    #[test]
    fn lambda_matches_price_form() {
        let w = paper();
        let scenario = w.scenario().clone();
        let path = scenario.path_from_drivers(vec![0.4, 0.1, -0.2]).unwrap();
        let (s1, s2) = (0.05, 9.65);
        let params = StrategyParams::new(vec![s1, s2, 0.7], Eta::Normal);
        for t in 0..3 {
            let ratio = path.prices[t] / 4.0;
            let expected = 4.0 * (E - 1.0) * (s1 * ratio * ratio - s2 * (-(t as f64) - 1.0).exp());
            let got = lambda_process(&w, &params, &path, t).unwrap();
            assert!((got - expected).abs() < 1e-10 * expected.abs().max(1.0));
        }
    }

    #[test]
    fn lambda_is_linear() {
        let w = paper();
        let path = w.scenario().path_from_drivers(vec![-0.4, 0.9, 0.0]).unwrap();
        let a = StrategyParams::new(vec![0.3, -1.1, 2.0], Eta::Normal);
        let b = StrategyParams::new(vec![-0.7, 4.0, 0.5], Eta::Normal);
        let sum = StrategyParams::new(vec![-0.4, 2.9, 2.5], Eta::Normal);
        for t in 0..3 {
            let la = lambda_process(&w, &a, &path, t).unwrap();
            let lb = lambda_process(&w, &b, &path, t).unwrap();
            let ls = lambda_process(&w, &sum, &path, t).unwrap();
            assert!((la + lb - ls).abs() < 1e-12 * (la.abs() + lb.abs()).max(1.0));
            let zero = StrategyParams::new(vec![0.0; 3], Eta::Normal);
            assert_eq!(lambda_process(&w, &zero, &path, t).unwrap(), 0.0);
        }
    }

    #[test]
    fn dimension_mismatch_is_reported() {
        let w = paper();
        let path = w.scenario().path_from_drivers(vec![0.0; 3]).unwrap();
        let params = StrategyParams::new(vec![1.0, 2.0], Eta::Normal);
        assert!(matches!(
            lambda_process(&w, &params, &path, 0),
            Err(Error::DimensionMismatch { expected: 3, got: 2 })
        ));
    }

    #[test]
    fn zero_params_hold_half() {
        let w = paper();
        let path = w.scenario().path_from_drivers(vec![1.0, -1.0, 0.5]).unwrap();
        let params = StrategyParams::new(vec![0.0; 3], Eta::Normal);
        assert_eq!(strategy_from_params(&w, &params, &path).unwrap(), vec![0.5; 3]);
        let logistic = StrategyParams::new(vec![0.0; 3], Eta::Logistic);
        assert_eq!(strategy_from_params(&w, &logistic, &path).unwrap(), vec![0.5; 3]);
    }

    #[test]
    fn huge_lambda_saturates_at_the_upper_bound() {
        let w = paper();
        let path = w.scenario().path_from_drivers(vec![0.0; 3]).unwrap();
        let params = StrategyParams::new(vec![1e6, 0.0, 0.0], Eta::Normal);
        assert_eq!(strategy_from_params(&w, &params, &path).unwrap(), vec![1.0; 3]);
    }

    #[test]
    fn eta_cdfs_are_valid() {
        for eta in [Eta::Normal, Eta::Logistic] {
            assert_eq!(eta.cdf(0.0), 0.5);
            assert!(eta.cdf(-40.0) < 1e-15);
            assert!(eta.cdf(40.0) > 1.0 - 1e-15);
            let mut prev = 0.0;
            for k in -100..=100 {
                let x = k as f64 * 0.1;
                let v = eta.cdf(x);
                assert!(v >= prev);
                prev = v;
            }
        }
        assert!((Eta::Normal.cdf(1.0) - 0.841_344_746_068_542_9).abs() < 1e-15);
    }

    #[test]
    fn tree_enumeration_matches_closed_form() {
        let tree = Tree {
            horizon: 3,
            s0: 10.0,
            branches: vec![
                Branch { driver: 1.0, prob: 0.375, growth: 1.25 },
                Branch { driver: -1.0, prob: 0.625, growth: 0.85 },
            ],
        };
        let scenario = MarketScenario::new(Model::Tree(tree), Bounds::constant(3, -0.5, 1.0)).unwrap();
        let spec = RiskSpec::new(vec![
            ScenarioMeasure { density: Density::TreeProduct { probs: vec![0.6, 0.4] }, alpha: 1.0 },
            ScenarioMeasure { density: Density::Unit, alpha: 0.0 },
        ])
        .unwrap();
        let w = compute_constants(Arc::new(scenario.clone()), Arc::new(spec.clone()), None, 0).unwrap();
        let lower = vec![-0.5; 3];
        let upper = vec![1.0; 3];
        for (i, m) in spec.measures.iter().enumerate() {
            let closed = closed_form_constants(&scenario, &m.density, &lower, &upper);
            let exact = w.measure(i);
            assert!((closed.d_plus - exact.d_plus).abs() < 1e-12);
            assert!((closed.d_minus - exact.d_minus).abs() < 1e-12);
            assert!((closed.c - exact.c).abs() < 1e-12);
        }
        assert_eq!(w.measure(1).d_plus, 0.0);
        assert_eq!(w.measure(1).d_minus, 0.0);
    }

    #[test]
    fn monte_carlo_constants_track_closed_form() {
        let g = Gbm { horizon: 3, s0: 4.0, drift: 0.0, vol: 1.0 };
        let prefix_bounds = Bounds::from_fn(|_, _| (0.0, 1.0));
        let scenario = MarketScenario::new(Model::Gbm(g), prefix_bounds).unwrap();
        let w = compute_constants(Arc::new(scenario), Arc::new(RiskSpec::paper_gbm()), Some(200_000), 3)
            .unwrap();
        assert!(!w.is_exact());
        let c = w.measure(1);
        let Provenance::MonteCarlo { d_minus_std_error, .. } = c.provenance else {
            panic!("expected Monte-Carlo provenance");
        };
        let e = std::f64::consts::E;
        let closed = 4.0 * (1.0 - 1.0 / e) * (1.0 + 1.0 / e + 1.0 / (e * e));
        assert!((c.d_minus - closed).abs() < 4.0 * d_minus_std_error);
        assert_eq!(w.aleph(), 2);
    }

    #[test]
    fn missing_budget_is_a_configuration_error() {
        let g = Gbm { horizon: 2, s0: 1.0, drift: 0.0, vol: 1.0 };
        let scenario = MarketScenario::new(Model::Gbm(g), Bounds::from_fn(|_, _| (0.0, 1.0))).unwrap();
        let spec = RiskSpec::new(vec![ScenarioMeasure {
            density: Density::NormalMeanShift { shift: 1.0 },
            alpha: 0.0,
        }])
        .unwrap();
        assert!(matches!(
            compute_constants(Arc::new(scenario), Arc::new(spec), None, 0),
            Err(Error::Config(_))
        ));
    }
}
