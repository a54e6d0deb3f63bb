//! Run configuration in TOML.
//!
//! ```toml
//! seed = 7
//! epsilon = 0.5
//! delta = 0.05
//! eta = "normal"
//!
//! [scenario]
//! model = "gbm"
//! horizon = 3
//! s0 = 4.0
//! drift = 0.0
//! vol = 1.0
//! lower = 0.0
//! upper = 1.0
//!
//! [[risk]]
//! kind = "normal-mean-shift"
//! shift = 1.0
//! alpha = 54.598150033144236
//!
//! [grid]
//! box = [[-1.0, 1.0], [0.0, 20.0]]
//!
//! [[budget]]
//! measure = 1
//! sign = "+"
//! kappa = 1400000
//! ```

use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::market::{Bounds, Branch, Gbm, MarketScenario, Model, Tree};
use crate::risk::{CrosscheckRoute, Density, RiskSpec, ScenarioMeasure};
use crate::search::GridSpec;
use crate::vcbound::{plan_samples, BoundVariant, SamplePlan};
use crate::weights::{compute_constants, Eta, TiltedWeights};
use crate::Sign;

/// A bound given once for every period or period by period.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PerPeriod {
    Constant(f64),
    Periods(Vec<f64>),
}

impl PerPeriod {
    fn expand(&self, horizon: usize, name: &str) -> Result<Vec<f64>> {
        match self {
            PerPeriod::Constant(x) => Ok(vec![*x; horizon]),
            PerPeriod::Periods(v) if v.len() == horizon => Ok(v.clone()),
            PerPeriod::Periods(v) => Err(Error::Config(format!(
                "`{name}` has {} entries for horizon {horizon}",
                v.len()
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ScenarioConfig {
    Gbm {
        horizon: usize,
        s0: f64,
        #[serde(default)]
        drift: f64,
        vol: f64,
        lower: PerPeriod,
        upper: PerPeriod,
    },
    Tree {
        horizon: usize,
        s0: f64,
        branches: Vec<Branch>,
        lower: PerPeriod,
        upper: PerPeriod,
    },
}

impl ScenarioConfig {
    pub fn build(&self) -> Result<MarketScenario> {
        let (model, horizon, lower, upper) = match self {
            ScenarioConfig::Gbm {
                horizon,
                s0,
                drift,
                vol,
                lower,
                upper,
            } => (
                Model::Gbm(Gbm {
                    horizon: *horizon,
                    s0: *s0,
                    drift: *drift,
                    vol: *vol,
                }),
                *horizon,
                lower,
                upper,
            ),
            ScenarioConfig::Tree {
                horizon,
                s0,
                branches,
                lower,
                upper,
            } => (
                Model::Tree(Tree {
                    horizon: *horizon,
                    s0: *s0,
                    branches: branches.clone(),
                }),
                *horizon,
                lower,
                upper,
            ),
        };
        let bounds = Bounds::PerPeriod {
            lower: lower.expand(horizon, "lower")?,
            upper: upper.expand(horizon, "upper")?,
        };
        MarketScenario::new(model, bounds)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RiskConfig {
    #[serde(flatten)]
    pub density: Density,
    pub alpha: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    /// `[lo, hi]` per active measure, in measure order.
    #[serde(rename = "box")]
    pub bounds: Option<Vec<[f64; 2]>>,
    pub points: Option<usize>,
    pub rounds: Option<usize>,
    pub shrink: Option<f64>,
    pub tol: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BudgetConfig {
    /// One-based measure index.
    pub measure: usize,
    pub sign: Sign,
    pub kappa: u64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: Option<String>,
    pub bank: Option<String>,
}

/// The file as written.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawConfig {
    pub seed: Option<u64>,
    pub epsilon: f64,
    pub delta: f64,
    #[serde(default)]
    pub eta: Eta,
    #[serde(default)]
    pub bound: BoundVariant,
    pub scenario: ScenarioConfig,
    pub risk: Vec<RiskConfig>,
    pub grid: Option<GridConfig>,
    #[serde(default)]
    pub budget: Vec<BudgetConfig>,
    pub crosscheck_samples: Option<usize>,
    pub crosscheck_route: Option<CrosscheckRoute>,
    #[serde(default)]
    pub output: OutputConfig,
}

/// A validated configuration.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub seed: u64,
    pub epsilon: f64,
    pub delta: f64,
    pub eta: Eta,
    pub bound: BoundVariant,
    pub scenario: Arc<MarketScenario>,
    pub spec: Arc<RiskSpec>,
    pub grid: Option<GridConfig>,
    /// Zero-based `(measure, sign, kappa)`; empty means "use the planner".
    pub budgets: Vec<(usize, Sign, u64)>,
    pub crosscheck_samples: usize,
    pub crosscheck_route: CrosscheckRoute,
    pub output: OutputConfig,
}

/// Cross-check size when the file gives none.
pub const DEFAULT_CROSSCHECK_SAMPLES: usize = 1_000_000;

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let raw: RawConfig = toml::from_str(text)?;
        Self::from_raw(raw)
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path.as_ref())?;
        Self::from_toml_str(&text)
    }

    pub fn from_raw(raw: RawConfig) -> Result<Self> {
        let seed = raw
            .seed
            .ok_or_else(|| Error::Config("`seed` is required; runs never default to the clock".into()))?;
        if !(raw.epsilon > 0.0 && raw.epsilon.is_finite()) {
            return Err(Error::Config(format!("epsilon must be positive, got {}", raw.epsilon)));
        }
        if !(raw.delta > 0.0 && raw.delta < 1.0) {
            return Err(Error::Config(format!("delta must lie in (0, 1), got {}", raw.delta)));
        }
        let scenario = raw.scenario.build()?;
        let spec = RiskSpec::new(
            raw.risk
                .iter()
                .map(|r| ScenarioMeasure {
                    density: r.density.clone(),
                    alpha: r.alpha,
                })
                .collect(),
        )?;
        spec.validate(&scenario)?;
        let mut budgets = Vec::with_capacity(raw.budget.len());
        for b in &raw.budget {
            if b.measure == 0 || b.measure > spec.len() {
                return Err(Error::Config(format!(
                    "budget names measure {} of {}",
                    b.measure,
                    spec.len()
                )));
            }
            budgets.push((b.measure - 1, b.sign, b.kappa));
        }
        let crosscheck_samples = raw.crosscheck_samples.unwrap_or(DEFAULT_CROSSCHECK_SAMPLES);
        if crosscheck_samples < 2 {
            return Err(Error::Config("crosscheck_samples must be at least 2".into()));
        }
        Ok(Self {
            seed,
            epsilon: raw.epsilon,
            delta: raw.delta,
            eta: raw.eta,
            bound: raw.bound,
            scenario: Arc::new(scenario),
            spec: Arc::new(spec),
            grid: raw.grid,
            budgets,
            crosscheck_samples,
            crosscheck_route: raw.crosscheck_route.unwrap_or(CrosscheckRoute::ScenarioMeasure),
            output: raw.output,
        })
    }

    pub fn weights(&self) -> Result<TiltedWeights> {
        compute_constants(self.scenario.clone(), self.spec.clone(), None, self.seed)
    }

    /// The budgeted plan if budgets are given, otherwise the minimal one.
    pub fn plan(&self, weights: &TiltedWeights) -> Result<SamplePlan> {
        if self.budgets.is_empty() {
            plan_samples(weights, self.epsilon, self.delta, self.bound)
        } else {
            SamplePlan::from_budgets(weights, &self.budgets, Some(self.epsilon), self.delta, self.bound)
        }
    }

    /// Budgets divided by `factor` (at least one sample each), with the
    /// precision they actually certify.
    pub fn scaled_plan(&self, weights: &TiltedWeights, factor: u64) -> Result<SamplePlan> {
        let base = self.plan(weights)?;
        let budgets: Vec<_> = base
            .entries
            .iter()
            .map(|e| (e.measure, e.sign, (e.kappa / factor).max(1)))
            .collect();
        SamplePlan::from_budgets(weights, &budgets, None, self.delta, self.bound)
    }

    /// Grid from the `[grid]` table over the defaults of
    /// [`GridSpec::default_for`].
    pub fn grid_spec(&self, weights: &TiltedWeights) -> Result<GridSpec> {
        let mut spec = GridSpec::default_for(weights);
        if let Some(g) = &self.grid {
            if let Some(b) = &g.bounds {
                if b.len() != spec.active_dims.len() {
                    return Err(Error::Config(format!(
                        "grid box has {} intervals for {} active measures",
                        b.len(),
                        spec.active_dims.len()
                    )));
                }
                spec.bounds = b.iter().map(|&[lo, hi]| (lo, hi)).collect();
            }
            if let Some(p) = g.points {
                spec.points_per_dim = p;
            }
            if let Some(r) = g.rounds {
                spec.refine_rounds = r;
            }
            if let Some(s) = g.shrink {
                spec.shrink_factor = s;
            }
            if let Some(t) = g.tol {
                spec.tol = t;
            }
        }
        if !spec.active_dims.is_empty() {
            spec.validate(weights)?;
        }
        Ok(spec)
    }
}
