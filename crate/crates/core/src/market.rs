//! Discrete-time single-asset markets.
//!
//! A scenario is driven by a sequence of `T` driver values `z_1..z_T`; the
//! discounted price `S_t` is a function of the prefix `z_1..z_t`, and so are
//! the trading bounds `a_t <= xi_t <= b_t`. The filtration is the one
//! generated by driver prefixes.
//!
//! Two models ship with the crate:
//!
//! * [`Gbm`]: `S_{t+1} = S_t exp(drift - vol^2/2 + vol z_{t+1})` with iid
//!   standard normal drivers under the reference measure. With `drift = 0`
//!   the discounted price is a martingale.
//! * [`Tree`]: a recombining multiplicative tree with a finite branch
//!   alphabet, explicit branch probabilities and growth factors. Every path
//!   can be enumerated, which is what the exact oracles build on.

use std::fmt;
use std::sync::Arc;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Relative slack allowed when checking holdings against their bounds.
const BOUND_SLACK: f64 = 1e-12;

/// Paths beyond this count are not enumerated.
pub const MAX_ENUMERATED_PATHS: usize = 1 << 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScenarioKind {
    ContinuousDriver,
    FiniteTree,
}

impl ScenarioKind {
    pub fn name(self) -> &'static str {
        match self {
            ScenarioKind::ContinuousDriver => "continuous-driver",
            ScenarioKind::FiniteTree => "finite-tree",
        }
    }
}

impl fmt::Display for ScenarioKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// One realisation of the driver sequence together with the prices it
/// generates.
#[derive(Debug, Clone, PartialEq)]
pub struct DriverPath {
    /// `z_1..z_T`.
    pub drivers: Vec<f64>,
    /// `S_0..S_T`.
    pub prices: Vec<f64>,
}

impl DriverPath {
    pub fn horizon(&self) -> usize {
        self.drivers.len()
    }

    /// Drivers observed by period `t`, i.e. `z_1..z_t`.
    pub fn prefix(&self, t: usize) -> &[f64] {
        &self.drivers[..t]
    }

    /// `S_{t+1} - S_t`.
    pub fn increment(&self, t: usize) -> f64 {
        self.prices[t + 1] - self.prices[t]
    }
}

/// Holdings `xi_0..xi_{T-1}` evaluated along one path.
#[derive(Debug, Clone, PartialEq)]
pub struct Strategy {
    pub holdings: Vec<f64>,
}

impl Strategy {
    pub fn new(holdings: Vec<f64>) -> Self {
        Self { holdings }
    }

    pub fn zero(horizon: usize) -> Self {
        Self {
            holdings: vec![0.0; horizon],
        }
    }
}

/// An adapted trading rule: maps a path to its holdings, where `xi_t` may
/// only look at `z_1..z_t`.
pub trait StrategyRule: Sync {
    fn holdings(&self, path: &DriverPath) -> Result<Vec<f64>>;
}

/// The same holdings on every path.
#[derive(Debug, Clone)]
pub struct ConstantRule(pub Vec<f64>);

impl StrategyRule for ConstantRule {
    fn holdings(&self, _path: &DriverPath) -> Result<Vec<f64>> {
        Ok(self.0.clone())
    }
}

impl<F> StrategyRule for F
where
    F: Fn(&DriverPath) -> Result<Vec<f64>> + Sync,
{
    fn holdings(&self, path: &DriverPath) -> Result<Vec<f64>> {
        self(path)
    }
}

type PrefixBoundsFn = dyn Fn(usize, &[f64]) -> (f64, f64) + Send + Sync;

/// Trading bounds `a_t(prefix) <= xi_t <= b_t(prefix)`.
#[derive(Clone)]
pub enum Bounds {
    /// Per-period constants.
    PerPeriod { lower: Vec<f64>, upper: Vec<f64> },
    /// Arbitrary functions of `(t, z_1..z_t)`.
    Prefix(Arc<PrefixBoundsFn>),
}

impl Bounds {
    pub fn constant(horizon: usize, lower: f64, upper: f64) -> Self {
        Bounds::PerPeriod {
            lower: vec![lower; horizon],
            upper: vec![upper; horizon],
        }
    }

    pub fn from_fn<F>(f: F) -> Self
    where
        F: Fn(usize, &[f64]) -> (f64, f64) + Send + Sync + 'static,
    {
        Bounds::Prefix(Arc::new(f))
    }

    pub fn at(&self, t: usize, prefix: &[f64]) -> (f64, f64) {
        match self {
            Bounds::PerPeriod { lower, upper } => (lower[t], upper[t]),
            Bounds::Prefix(f) => f(t, prefix),
        }
    }

    /// `Some((a, b))` per period when the bounds do not depend on the path.
    pub fn per_period(&self) -> Option<(&[f64], &[f64])> {
        match self {
            Bounds::PerPeriod { lower, upper } => Some((lower, upper)),
            Bounds::Prefix(_) => None,
        }
    }
}

impl fmt::Debug for Bounds {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Bounds::PerPeriod { lower, upper } => f
                .debug_struct("PerPeriod")
                .field("lower", lower)
                .field("upper", upper)
                .finish(),
            Bounds::Prefix(_) => f.write_str("Prefix(<fn>)"),
        }
    }
}

/// Discretely observed geometric Brownian motion.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Gbm {
    pub horizon: usize,
    pub s0: f64,
    /// Per-period log drift of the discounted price; zero gives a martingale.
    pub drift: f64,
    /// Per-period volatility.
    pub vol: f64,
}

impl Gbm {
    fn log_step(&self, z: f64) -> f64 {
        self.drift - 0.5 * self.vol * self.vol + self.vol * z
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Branch {
    /// Driver label recorded on the path; must be unique within the tree.
    pub driver: f64,
    pub prob: f64,
    /// Multiplicative price move `S_{t+1} / S_t`.
    pub growth: f64,
}

/// Recombining multiplicative tree with a fixed branch alphabet per step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub horizon: usize,
    pub s0: f64,
    pub branches: Vec<Branch>,
}

impl Tree {
    pub fn branch_index(&self, driver: f64) -> Option<usize> {
        self.branches
            .iter()
            .position(|b| b.driver.to_bits() == driver.to_bits())
    }

    /// Number of distinct paths, `k^T`.
    pub fn path_count(&self) -> Option<usize> {
        self.branches.len().checked_pow(self.horizon as u32)
    }

    /// Position of a prefix among the `k^t` nodes of level `t`.
    pub fn node_index(&self, prefix: &[f64]) -> Result<usize> {
        let k = self.branches.len();
        prefix.iter().try_fold(0usize, |acc, &z| {
            let b = self
                .branch_index(z)
                .ok_or_else(|| Error::Argument(format!("driver {z} is not a branch label")))?;
            Ok(acc * k + b)
        })
    }

    /// Branch indices for the `index`-th node of level `t`.
    pub fn node_branches(&self, t: usize, mut index: usize) -> Vec<usize> {
        let k = self.branches.len();
        let mut out = vec![0; t];
        for slot in out.iter_mut().rev() {
            *slot = index % k;
            index /= k;
        }
        out
    }

    pub fn prefix_probability(&self, prefix: &[f64]) -> Result<f64> {
        prefix.iter().try_fold(1.0, |acc, &z| {
            let b = self
                .branch_index(z)
                .ok_or_else(|| Error::Argument(format!("driver {z} is not a branch label")))?;
            Ok(acc * self.branches[b].prob)
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Model {
    Gbm(Gbm),
    Tree(Tree),
}

/// A market: price dynamics under the reference measure plus trading
/// bounds. Immutable once built and safe to share between threads.
#[derive(Debug, Clone)]
pub struct MarketScenario {
    model: Model,
    bounds: Bounds,
}

impl MarketScenario {
    pub fn new(model: Model, bounds: Bounds) -> Result<Self> {
        let horizon = match &model {
            Model::Gbm(g) => {
                if !(g.s0 > 0.0 && g.s0.is_finite()) {
                    return Err(Error::Config(format!("s0 must be positive, got {}", g.s0)));
                }
                if !(g.vol >= 0.0 && g.vol.is_finite() && g.drift.is_finite()) {
                    return Err(Error::Config("gbm drift/vol must be finite, vol >= 0".into()));
                }
                g.horizon
            }
            Model::Tree(tree) => {
                validate_tree(tree)?;
                tree.horizon
            }
        };
        if horizon == 0 {
            return Err(Error::Config("horizon must be positive".into()));
        }
        if let Bounds::PerPeriod { lower, upper } = &bounds {
            if lower.len() != horizon || upper.len() != horizon {
                return Err(Error::Config(format!(
                    "bounds need {horizon} entries per side, got {} and {}",
                    lower.len(),
                    upper.len()
                )));
            }
            for t in 0..horizon {
                if !lower[t].is_finite() || !upper[t].is_finite() || lower[t] > upper[t] {
                    return Err(Error::Config(format!(
                        "bounds at period {t} are not an interval: [{}, {}]",
                        lower[t], upper[t]
                    )));
                }
            }
        }
        Ok(Self { model, bounds })
    }

    /// The GBM example with `S_0 = 4`, unit volatility, zero drift, `T = 3`
    /// and holdings restricted to `[0, 1]`.
    pub fn paper_gbm() -> Self {
        let model = Model::Gbm(Gbm {
            horizon: 3,
            s0: 4.0,
            drift: 0.0,
            vol: 1.0,
        });
        Self::new(model, Bounds::constant(3, 0.0, 1.0)).expect("valid built-in scenario")
    }

    pub fn model(&self) -> &Model {
        &self.model
    }

    pub fn bounds(&self) -> &Bounds {
        &self.bounds
    }

    pub fn kind(&self) -> ScenarioKind {
        match self.model {
            Model::Gbm(_) => ScenarioKind::ContinuousDriver,
            Model::Tree(_) => ScenarioKind::FiniteTree,
        }
    }

    pub fn horizon(&self) -> usize {
        match &self.model {
            Model::Gbm(g) => g.horizon,
            Model::Tree(t) => t.horizon,
        }
    }

    pub fn s0(&self) -> f64 {
        match &self.model {
            Model::Gbm(g) => g.s0,
            Model::Tree(t) => t.s0,
        }
    }

    pub fn as_tree(&self) -> Option<&Tree> {
        match &self.model {
            Model::Tree(t) => Some(t),
            Model::Gbm(_) => None,
        }
    }

    pub fn as_gbm(&self) -> Option<&Gbm> {
        match &self.model {
            Model::Gbm(g) => Some(g),
            Model::Tree(_) => None,
        }
    }

    pub fn bounds_at(&self, t: usize, prefix: &[f64]) -> (f64, f64) {
        self.bounds.at(t, prefix)
    }

    /// `S_t` as a function of the driver prefix `z_1..z_t`.
    pub fn price(&self, prefix: &[f64]) -> Result<f64> {
        match &self.model {
            Model::Gbm(g) => Ok(g.s0 * prefix.iter().map(|&z| g.log_step(z)).sum::<f64>().exp()),
            Model::Tree(tree) => prefix.iter().try_fold(tree.s0, |s, &z| {
                let b = tree
                    .branch_index(z)
                    .ok_or_else(|| Error::Argument(format!("driver {z} is not a branch label")))?;
                Ok(s * tree.branches[b].growth)
            }),
        }
    }

    /// Builds the path for a given driver sequence.
    pub fn path_from_drivers(&self, drivers: Vec<f64>) -> Result<DriverPath> {
        if drivers.len() != self.horizon() {
            return Err(Error::DimensionMismatch {
                expected: self.horizon(),
                got: drivers.len(),
            });
        }
        let mut prices = Vec::with_capacity(drivers.len() + 1);
        match &self.model {
            Model::Gbm(g) => {
                let mut log_s = 0.0;
                prices.push(g.s0);
                for &z in &drivers {
                    log_s += g.log_step(z);
                    prices.push(g.s0 * log_s.exp());
                }
            }
            Model::Tree(tree) => {
                let mut s = tree.s0;
                prices.push(s);
                for &z in &drivers {
                    let b = tree.branch_index(z).ok_or_else(|| {
                        Error::Argument(format!("driver {z} is not a branch label"))
                    })?;
                    s *= tree.branches[b].growth;
                    prices.push(s);
                }
            }
        }
        Ok(DriverPath { drivers, prices })
    }

    /// Draws one path under the reference measure.
    pub fn sample_path<R: Rng + ?Sized>(&self, rng: &mut R) -> DriverPath {
        let drivers = match &self.model {
            Model::Gbm(g) => (0..g.horizon).map(|_| rng.sample(StandardNormal)).collect(),
            Model::Tree(tree) => {
                let probs: Vec<f64> = tree.branches.iter().map(|b| b.prob).collect();
                (0..tree.horizon)
                    .map(|_| tree.branches[sample_categorical(&probs, rng)].driver)
                    .collect()
            }
        };
        self.path_from_drivers(drivers)
            .expect("sampled drivers are valid by construction")
    }

    /// Checks `a_t <= xi_t <= b_t` along `path`.
    pub fn check_bounds(&self, path: &DriverPath, holdings: &[f64]) -> Result<()> {
        for (t, &xi) in holdings.iter().enumerate() {
            let (lower, upper) = self.bounds_at(t, path.prefix(t));
            let slack = BOUND_SLACK * lower.abs().max(upper.abs()).max(1.0);
            if !(xi >= lower - slack && xi <= upper + slack) {
                return Err(Error::Constraint {
                    t,
                    value: xi,
                    lower,
                    upper,
                });
            }
        }
        Ok(())
    }

    /// `W(xi) = sum_t xi_t (S_{t+1} - S_t)`; the portfolio value is
    /// `w0 + W(xi)`.
    pub fn wealth_increment(&self, path: &DriverPath, holdings: &[f64]) -> Result<f64> {
        if holdings.len() != path.horizon() {
            return Err(Error::DimensionMismatch {
                expected: path.horizon(),
                got: holdings.len(),
            });
        }
        self.check_bounds(path, holdings)?;
        Ok(holdings
            .iter()
            .enumerate()
            .map(|(t, &xi)| xi * path.increment(t))
            .sum())
    }

    /// Every path of a finite tree with its reference probability, in
    /// lexicographic branch order.
    pub fn enumerate_paths(&self) -> Result<Vec<(DriverPath, f64)>> {
        let tree = self.as_tree().ok_or(Error::UnsupportedKind {
            op: "enumerate_paths",
            kind: self.kind().name(),
        })?;
        let count = tree
            .path_count()
            .filter(|&c| c <= MAX_ENUMERATED_PATHS)
            .ok_or(Error::SizeLimit {
                what: "path count",
                size: usize::MAX,
                limit: MAX_ENUMERATED_PATHS,
            })?;
        let mut out = Vec::with_capacity(count);
        for index in 0..count {
            let branches = tree.node_branches(tree.horizon, index);
            let drivers = branches.iter().map(|&b| tree.branches[b].driver).collect();
            let prob = branches.iter().map(|&b| tree.branches[b].prob).product();
            out.push((self.path_from_drivers(drivers)?, prob));
        }
        Ok(out)
    }
}

fn validate_tree(tree: &Tree) -> Result<()> {
    if tree.branches.is_empty() {
        return Err(Error::Config("tree needs at least one branch".into()));
    }
    if !(tree.s0 > 0.0 && tree.s0.is_finite()) {
        return Err(Error::Config(format!("s0 must be positive, got {}", tree.s0)));
    }
    let mut total = 0.0;
    for (k, b) in tree.branches.iter().enumerate() {
        if !(b.prob > 0.0 && b.prob <= 1.0) {
            return Err(Error::Config(format!(
                "branch {k} probability must lie in (0, 1], got {}",
                b.prob
            )));
        }
        if !(b.growth > 0.0 && b.growth.is_finite()) || !b.driver.is_finite() {
            return Err(Error::Config(format!("branch {k} has invalid growth or driver")));
        }
        if tree.branch_index(b.driver) != Some(k) {
            return Err(Error::Config(format!("branch driver {} is not unique", b.driver)));
        }
        total += b.prob;
    }
    if (total - 1.0).abs() > 1e-12 {
        return Err(Error::Config(format!(
            "branch probabilities sum to {total}, not 1"
        )));
    }
    Ok(())
}

/// Inverse-CDF draw from a finite distribution whose weights sum to ~1.
pub(crate) fn sample_categorical<R: Rng + ?Sized>(probs: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (k, &p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return k;
        }
    }
    probs.len() - 1
}
