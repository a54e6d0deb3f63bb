//! Convex risk measures generated by finitely many scenario measures:
//!
//! ```text
//! rho(X) = max_i [ -E(X f_i) + alpha_i ],   f_i = dQ_i / dP
//! ```
//!
//! A position `X` is acceptable when `rho(X) <= 0`, i.e. `E^{Q_i} X >= alpha_i`
//! for every scenario. Densities are path evaluators; every built-in density
//! makes the one-step price growth `E^{Q_i}[S_{t+1}/S_t | F_t]` a constant,
//! which is what the closed-form evaluators elsewhere rely on.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::market::{sample_categorical, DriverPath, MarketScenario, Model, StrategyRule};
use crate::rng::{stream, stream_id, Purpose};
use crate::Sign;

/// Radon-Nikodym derivative of a scenario measure with respect to the
/// reference measure.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Density {
    /// `f = 1`; the scenario is the reference measure itself.
    Unit,
    /// Gaussian drivers shifted to `N(shift, 1)`:
    /// `f = exp(shift * sum z_k - T shift^2 / 2)`.
    NormalMeanShift { shift: f64 },
    /// Tree branches re-weighted to `probs` at every step:
    /// `f = prod_k q(z_k) / p(z_k)`.
    TreeProduct { probs: Vec<f64> },
}

impl Density {
    pub fn validate(&self, scenario: &MarketScenario) -> Result<()> {
        match (self, scenario.model()) {
            (Density::Unit, _) => Ok(()),
            (Density::NormalMeanShift { shift }, Model::Gbm(_)) => {
                if shift.is_finite() {
                    Ok(())
                } else {
                    Err(Error::Config("mean shift must be finite".into()))
                }
            }
            (Density::TreeProduct { probs }, Model::Tree(tree)) => {
                if probs.len() != tree.branches.len() {
                    return Err(Error::Config(format!(
                        "tree-product density has {} probabilities for {} branches",
                        probs.len(),
                        tree.branches.len()
                    )));
                }
                if probs.iter().any(|&q| !(0.0..=1.0).contains(&q)) {
                    return Err(Error::Config("tree-product probabilities must lie in [0, 1]".into()));
                }
                let total: f64 = probs.iter().sum();
                if (total - 1.0).abs() > 1e-12 {
                    return Err(Error::Config(format!(
                        "tree-product probabilities sum to {total}, not 1"
                    )));
                }
                Ok(())
            }
            (d, _) => Err(Error::Config(format!(
                "density {d:?} is not defined on {} scenarios",
                scenario.kind()
            ))),
        }
    }

    /// `f(path)`.
    pub fn eval(&self, scenario: &MarketScenario, path: &DriverPath) -> f64 {
        self.density_process(scenario, &path.drivers)
    }

    /// `L_t = E[f | F_t]` at the prefix `z_1..z_t`; equals `f` on full paths.
    pub fn density_process(&self, scenario: &MarketScenario, prefix: &[f64]) -> f64 {
        match (self, scenario.model()) {
            (Density::Unit, _) => 1.0,
            (Density::NormalMeanShift { shift }, _) => {
                let sum: f64 = prefix.iter().sum();
                (shift * sum - 0.5 * prefix.len() as f64 * shift * shift).exp()
            }
            (Density::TreeProduct { probs }, Model::Tree(tree)) => prefix
                .iter()
                .map(|&z| {
                    let b = tree.branch_index(z).expect("path drivers are branch labels");
                    probs[b] / tree.branches[b].prob
                })
                .product(),
            (Density::TreeProduct { .. }, Model::Gbm(_)) => {
                unreachable!("validated densities match their scenario")
            }
        }
    }

    /// `E^Q[S_{t+1} / S_t | F_t]`, constant in `t` and the path for every
    /// built-in density.
    pub fn mean_growth(&self, scenario: &MarketScenario) -> f64 {
        match (self, scenario.model()) {
            (Density::Unit, Model::Gbm(g)) => g.drift.exp(),
            (Density::NormalMeanShift { shift }, Model::Gbm(g)) => (g.drift + g.vol * shift).exp(),
            (Density::Unit, Model::Tree(tree)) => {
                tree.branches.iter().map(|b| b.prob * b.growth).sum()
            }
            (Density::TreeProduct { probs }, Model::Tree(tree)) => tree
                .branches
                .iter()
                .zip(probs)
                .map(|(b, q)| q * b.growth)
                .sum(),
            _ => unreachable!("validated densities match their scenario"),
        }
    }

    /// Driver mean under `Q` for Gaussian-driver scenarios.
    pub(crate) fn normal_shift(&self) -> Option<f64> {
        match self {
            Density::Unit => Some(0.0),
            Density::NormalMeanShift { shift } => Some(*shift),
            Density::TreeProduct { .. } => None,
        }
    }

    /// Draws a path under the scenario measure `Q` itself.
    pub fn sample_path_under<R: Rng + ?Sized>(
        &self,
        scenario: &MarketScenario,
        rng: &mut R,
    ) -> DriverPath {
        let horizon = scenario.horizon();
        let drivers: Vec<f64> = match (self, scenario.model()) {
            (Density::TreeProduct { probs }, Model::Tree(tree)) => (0..horizon)
                .map(|_| tree.branches[sample_categorical(probs, rng)].driver)
                .collect(),
            (Density::Unit, Model::Tree(_)) => return scenario.sample_path(rng),
            (d, Model::Gbm(_)) => {
                let shift = d.normal_shift().expect("gaussian density");
                let normal = Normal::new(shift, 1.0).expect("unit variance");
                (0..horizon).map(|_| normal.sample(rng)).collect()
            }
            _ => unreachable!("validated densities match their scenario"),
        };
        scenario
            .path_from_drivers(drivers)
            .expect("sampled drivers are valid")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioMeasure {
    pub density: Density,
    /// Floor on expected terminal wealth under this scenario.
    pub alpha: f64,
}

/// `rho` as a finite list of `(f_i, alpha_i)`. Immutable and shareable.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RiskSpec {
    pub measures: Vec<ScenarioMeasure>,
}

impl RiskSpec {
    pub fn new(measures: Vec<ScenarioMeasure>) -> Result<Self> {
        if measures.is_empty() {
            return Err(Error::Config("a risk spec needs at least one measure".into()));
        }
        if measures.iter().any(|m| !m.alpha.is_finite()) {
            return Err(Error::Config("penalties must be finite".into()));
        }
        Ok(Self { measures })
    }

    /// Drifts `+1`, `-1`, `0` with floors `e^4`, `e^-1` and `0.2`.
    pub fn paper_gbm() -> Self {
        let shifts = [1.0, -1.0, 0.0];
        let alphas = [4f64.exp(), (-1f64).exp(), 0.2];
        Self::new(
            shifts
                .iter()
                .zip(alphas)
                .map(|(&shift, alpha)| ScenarioMeasure {
                    density: Density::NormalMeanShift { shift },
                    alpha,
                })
                .collect(),
        )
        .expect("valid built-in spec")
    }

    pub fn len(&self) -> usize {
        self.measures.len()
    }

    pub fn is_empty(&self) -> bool {
        self.measures.is_empty()
    }

    pub fn alphas(&self) -> Vec<f64> {
        self.measures.iter().map(|m| m.alpha).collect()
    }

    /// Checks every density against the scenario; on finite trees also
    /// checks that each `Q_i` has unit mass.
    pub fn validate(&self, scenario: &MarketScenario) -> Result<()> {
        for m in &self.measures {
            m.density.validate(scenario)?;
        }
        if scenario.as_tree().is_some() {
            let paths = scenario.enumerate_paths()?;
            for (i, m) in self.measures.iter().enumerate() {
                let mass: f64 = paths
                    .iter()
                    .map(|(path, p)| p * m.density.eval(scenario, path))
                    .sum();
                if (mass - 1.0).abs() > 1e-10 {
                    return Err(Error::Config(format!(
                        "measure {} has total mass {mass}, not 1",
                        i + 1
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Maximum with ties resolved to the smallest index.
pub fn sup_with_index(values: &[f64]) -> (f64, usize) {
    let mut best = (f64::NEG_INFINITY, 0);
    for (i, &v) in values.iter().enumerate() {
        if v > best.0 {
            best = (v, i);
        }
    }
    best
}

/// Per-measure terms `-E(W f_i) + alpha_i` of `rho(W)`, by enumeration.
pub fn rho_terms_exact(
    spec: &RiskSpec,
    scenario: &MarketScenario,
    rule: &dyn StrategyRule,
) -> Result<Vec<f64>> {
    if scenario.as_tree().is_none() {
        return Err(Error::UnsupportedKind {
            op: "rho_exact",
            kind: scenario.kind().name(),
        });
    }
    let mut expectations = vec![0.0; spec.len()];
    for (path, p) in scenario.enumerate_paths()? {
        let holdings = rule.holdings(&path)?;
        let w = scenario.wealth_increment(&path, &holdings)?;
        for (e, m) in expectations.iter_mut().zip(&spec.measures) {
            *e += p * m.density.eval(scenario, &path) * w;
        }
    }
    Ok(spec
        .measures
        .iter()
        .zip(expectations)
        .map(|(m, e)| -e + m.alpha)
        .collect())
}

/// `rho(w0 + W(xi))` on a finite tree, by exhaustive enumeration.
pub fn rho_exact(
    spec: &RiskSpec,
    scenario: &MarketScenario,
    rule: &dyn StrategyRule,
    w0: f64,
) -> Result<f64> {
    let terms = rho_terms_exact(spec, scenario, rule)?;
    Ok(sup_with_index(&terms).0 - w0)
}

/// How the cross-check draws its samples.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CrosscheckRoute {
    /// Reference-measure paths; averages `W(xi) f_i`.
    Reference,
    /// Paths drawn under each `Q_i`; averages the conditional increments
    /// `sum_t xi_t E^{Q_i}[S_{t+1} - S_t | F_t]` with the undiscounted
    /// price as a control variate. Far lower variance when `f_i` is
    /// heavy-tailed under the reference measure.
    ScenarioMeasure,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Crosscheck {
    pub route: CrosscheckRoute,
    pub samples: usize,
    /// `sup_i [-est_i + alpha_i]`.
    pub estimate: f64,
    pub argmax: usize,
    /// Estimated `E[(w0 + W) f_i]`.
    pub expectations: Vec<f64>,
    /// Standard error of each expectation.
    pub std_errors: Vec<f64>,
}

impl Crosscheck {
    pub fn terms(&self, spec: &RiskSpec) -> Vec<f64> {
        spec.measures
            .iter()
            .zip(&self.expectations)
            .map(|(m, e)| -e + m.alpha)
            .collect()
    }
}

const CROSSCHECK_CHUNK: usize = 8192;

#[derive(Debug, Clone, Copy, Default)]
struct Moments {
    n: usize,
    y: f64,
    c: f64,
    yy: f64,
    cc: f64,
    yc: f64,
}

impl Moments {
    fn push(&mut self, y: f64, c: f64) {
        self.n += 1;
        self.y += y;
        self.c += c;
        self.yy += y * y;
        self.cc += c * c;
        self.yc += y * c;
    }

    fn merge(mut self, o: &Moments) -> Moments {
        self.n += o.n;
        self.y += o.y;
        self.c += o.c;
        self.yy += o.yy;
        self.cc += o.cc;
        self.yc += o.yc;
        self
    }

    /// Mean and standard error of `y`, optionally adjusted by the control
    /// `c` with known mean.
    fn estimate(&self, control_mean: Option<f64>) -> (f64, f64) {
        let n = self.n as f64;
        let my = self.y / n;
        let syy = (self.yy - n * my * my).max(0.0);
        match control_mean {
            None => (my, (syy / (n - 1.0) / n).sqrt()),
            Some(mu_c) => {
                let mc = self.c / n;
                let scc = (self.cc - n * mc * mc).max(0.0);
                let syc = self.yc - n * my * mc;
                let beta = if scc > 0.0 { syc / scc } else { 0.0 };
                let resid = (syy - 2.0 * beta * syc + beta * beta * scc).max(0.0);
                (my - beta * (mc - mu_c), (resid / (n - 1.0) / n).sqrt())
            }
        }
    }
}

/// Plain Monte-Carlo estimate of `rho(w0 + W(xi))`, independent of the
/// tilted-measure machinery. Deterministic in `seed`: samples are drawn in
/// fixed-size chunks with one stream per chunk and reduced in chunk order.
pub fn rho_mc_crosscheck(
    spec: &RiskSpec,
    scenario: &MarketScenario,
    rule: &dyn StrategyRule,
    w0: f64,
    n: usize,
    seed: u64,
    route: CrosscheckRoute,
) -> Result<Crosscheck> {
    if n < 2 {
        return Err(Error::Argument("cross-check needs at least two samples".into()));
    }
    let chunks = n.div_ceil(CROSSCHECK_CHUNK);
    let chunk_len = |c: usize| CROSSCHECK_CHUNK.min(n - c * CROSSCHECK_CHUNK);
    let m = spec.len();
    let mut expectations = Vec::with_capacity(m);
    let mut std_errors = Vec::with_capacity(m);

    match route {
        CrosscheckRoute::Reference => {
            let partial: Vec<Vec<Moments>> = (0..chunks)
                .into_par_iter()
                .map(|c| -> Result<Vec<Moments>> {
                    let mut rng = stream(seed, stream_id(Purpose::Crosscheck, 0, Sign::Plus, c as u64));
                    let mut acc = vec![Moments::default(); m];
                    for _ in 0..chunk_len(c) {
                        let path = scenario.sample_path(&mut rng);
                        let w = scenario.wealth_increment(&path, &rule.holdings(&path)?)?;
                        for (a, meas) in acc.iter_mut().zip(&spec.measures) {
                            a.push(w * meas.density.eval(scenario, &path), 0.0);
                        }
                    }
                    Ok(acc)
                })
                .collect::<Result<_>>()?;
            for i in 0..m {
                let total = partial
                    .iter()
                    .fold(Moments::default(), |acc, p| acc.merge(&p[i]));
                let (mean, se) = total.estimate(None);
                expectations.push(w0 + mean);
                std_errors.push(se);
            }
        }
        CrosscheckRoute::ScenarioMeasure => {
            for (i, meas) in spec.measures.iter().enumerate() {
                let growth = meas.density.mean_growth(scenario);
                let horizon = scenario.horizon();
                let control_mean = scenario.s0() * (growth.powi(horizon as i32) - 1.0);
                let partial: Vec<Moments> = (0..chunks)
                    .into_par_iter()
                    .map(|c| -> Result<Moments> {
                        let mut rng =
                            stream(seed, stream_id(Purpose::Crosscheck, i + 1, Sign::Plus, c as u64));
                        let mut acc = Moments::default();
                        for _ in 0..chunk_len(c) {
                            let path = meas.density.sample_path_under(scenario, &mut rng);
                            let holdings = rule.holdings(&path)?;
                            if holdings.len() != horizon {
                                return Err(Error::DimensionMismatch {
                                    expected: horizon,
                                    got: holdings.len(),
                                });
                            }
                            scenario.check_bounds(&path, &holdings)?;
                            let (mut y, mut ctl) = (0.0, 0.0);
                            for (t, xi) in holdings.iter().enumerate() {
                                let drift = path.prices[t] * (growth - 1.0);
                                y += xi * drift;
                                ctl += drift;
                            }
                            acc.push(y, ctl);
                        }
                        Ok(acc)
                    })
                    .collect::<Result<_>>()?;
                let total = partial
                    .iter()
                    .fold(Moments::default(), |acc, p| acc.merge(p));
                let (mean, se) = total.estimate(Some(control_mean));
                expectations.push(w0 + mean);
                std_errors.push(se);
            }
        }
    }

    let terms: Vec<f64> = spec
        .measures
        .iter()
        .zip(&expectations)
        .map(|(meas, e)| -e + meas.alpha)
        .collect();
    let (estimate, argmax) = sup_with_index(&terms);
    Ok(Crosscheck {
        route,
        samples: n,
        estimate,
        argmax,
        expectations,
        std_errors,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::market::{Bounds, Branch, ConstantRule, Tree};

    fn one_period_martingale() -> MarketScenario {
        let tree = Tree {
            horizon: 1,
            s0: 4.0,
            branches: vec![
                Branch { driver: 1.0, prob: 0.5, growth: 1.25 },
                Branch { driver: -1.0, prob: 0.5, growth: 0.75 },
            ],
        };
        MarketScenario::new(Model::Tree(tree), Bounds::constant(1, 0.0, 1.0)).unwrap()
    }

    fn two_measure_tree() -> (MarketScenario, RiskSpec) {
        let tree = Tree {
            horizon: 2,
            s0: 10.0,
            branches: vec![
                Branch { driver: 1.0, prob: 0.375, growth: 1.25 },
                Branch { driver: -1.0, prob: 0.625, growth: 0.85 },
            ],
        };
        let scenario =
            MarketScenario::new(Model::Tree(tree), Bounds::constant(2, -0.5, 1.0)).unwrap();
        let spec = RiskSpec::new(vec![
            ScenarioMeasure {
                density: Density::TreeProduct { probs: vec![0.6, 0.4] },
                alpha: 1.0,
            },
            ScenarioMeasure {
                density: Density::TreeProduct { probs: vec![0.2, 0.8] },
                alpha: 0.5,
            },
        ])
        .unwrap();
        spec.validate(&scenario).unwrap();
        (scenario, spec)
    }

    #[test]
    fn zero_strategy_costs_the_largest_penalty() {
        let (scenario, spec) = two_measure_tree();
        let rho = rho_exact(&spec, &scenario, &ConstantRule(vec![0.0, 0.0]), 0.0).unwrap();
        assert_eq!(rho, 1.0);
    }

    #[test]
    fn martingale_single_measure_is_acceptable_at_zero() {
        let scenario = one_period_martingale();
        let spec = RiskSpec::new(vec![ScenarioMeasure { density: Density::Unit, alpha: 0.0 }]).unwrap();
        let rho = rho_exact(&spec, &scenario, &ConstantRule(vec![1.0]), 0.0).unwrap();
        assert_eq!(rho, 0.0);
    }

    #[test]
    fn exact_rho_rejects_continuous_scenarios() {
        let scenario = MarketScenario::paper_gbm();
        let spec = RiskSpec::paper_gbm();
        assert!(matches!(
            rho_exact(&spec, &scenario, &ConstantRule(vec![0.0; 3]), 0.0),
            Err(Error::UnsupportedKind { .. })
        ));
    }

    #[test]
    fn densities_have_unit_mass_and_consistent_growth() {
        let (scenario, spec) = two_measure_tree();
        let paths = scenario.enumerate_paths().unwrap();
        for m in &spec.measures {
            // E^Q[S_1 / S_0] by enumeration of the first step.
            let g: f64 = paths
                .iter()
                .map(|(path, p)| p * m.density.eval(&scenario, path) * path.prices[1] / path.prices[0])
                .sum();
            assert!((g - m.density.mean_growth(&scenario)).abs() < 1e-12);
        }
    }

    #[test]
    fn ties_resolve_to_smallest_index() {
        assert_eq!(sup_with_index(&[1.0, 3.0, 3.0, 2.0]), (3.0, 1));
        assert_eq!(sup_with_index(&[0.2, 0.2]), (0.2, 0));
    }

    #[test]
    fn crosscheck_of_zero_strategy_is_exact() {
        let scenario = MarketScenario::paper_gbm();
        let spec = RiskSpec::paper_gbm();
        for route in [CrosscheckRoute::Reference, CrosscheckRoute::ScenarioMeasure] {
            let cc = rho_mc_crosscheck(&spec, &scenario, &ConstantRule(vec![0.0; 3]), 0.3, 1000, 1, route)
                .unwrap();
            assert_eq!(cc.estimate, 4f64.exp() - 0.3);
            assert!(cc.std_errors.iter().all(|&s| s == 0.0));
        }
    }

    #[test]
    fn crosscheck_converges_to_exact_on_trees() {
        let (scenario, spec) = two_measure_tree();
        let rule = |path: &DriverPath| -> Result<Vec<f64>> {
            let up = path.drivers[0] > 0.0;
            Ok(vec![0.3, if up { 0.9 } else { -0.4 }])
        };
        let exact = rho_terms_exact(&spec, &scenario, &rule).unwrap();
        for route in [CrosscheckRoute::Reference, CrosscheckRoute::ScenarioMeasure] {
            let cc = rho_mc_crosscheck(&spec, &scenario, &rule, 0.0, 100_000, 17, route).unwrap();
            let terms = cc.terms(&spec);
            for i in 0..spec.len() {
                assert!(
                    (terms[i] - exact[i]).abs() <= 4.0 * cc.std_errors[i] + 1e-12,
                    "{route:?} term {i}: {} vs {} (se {})",
                    terms[i],
                    exact[i],
                    cc.std_errors[i]
                );
            }
        }
    }

    #[test]
    fn crosscheck_needs_two_samples() {
        let (scenario, spec) = two_measure_tree();
        assert!(rho_mc_crosscheck(
            &spec,
            &scenario,
            &ConstantRule(vec![0.0; 2]),
            0.0,
            1,
            0,
            CrosscheckRoute::Reference
        )
        .is_err());
    }

    #[test]
    fn mismatched_density_is_rejected() {
        let scenario = MarketScenario::paper_gbm();
        let spec = RiskSpec::new(vec![ScenarioMeasure {
            density: Density::TreeProduct { probs: vec![0.5, 0.5] },
            alpha: 0.0,
        }])
        .unwrap();
        assert!(spec.validate(&scenario).is_err());
    }
}
