//! Near-minimal capital for acceptability under convex risk measures.
//!
//! Given a discrete-time market and a risk measure
//! `rho(X) = max_i [-E^{Q_i} X + alpha_i]` generated by finitely many
//! scenario measures, the crate searches the strategy family
//! `xi_t(s) = (b_t - a_t) eta(lambda_t(s)) + a_t` for the smallest capital
//! `w0` with `rho(w0 + W(xi(s))) <= 0`. The expectations are estimated for
//! all `s` at once from samples of tilted measures, with a uniform error
//! certificate from VC theory: with probability at least `1 - aleph * delta`
//! every estimate is within `epsilon` of the truth.
//!
//! The pipeline, one module per stage:
//!
//! 1. [`market`]: price paths, trading bounds, wealth.
//! 2. [`risk`]: scenario densities, exact and plain Monte-Carlo `rho`.
//! 3. [`weights`]: the weight processes `v_t(f_i)`, normalizers and `aleph`.
//! 4. [`vcbound`]: shatter coefficients, deviation bounds, sample plans.
//! 5. [`sampler`]: certified sample banks from the tilted measures.
//! 6. [`estimator`]: `rho_hat(s)` from a bank.
//! 7. [`search`]: grid search with refinement.
//! 8. [`oracle`]: exact finite-tree counterparts and a linear-programming
//!    baseline for the minimal capital.
//!
//! [`config`] and [`cli`] wire these into batch commands.

pub mod cli;
pub mod config;
pub mod error;
pub mod estimator;
pub mod market;
pub mod oracle;
pub mod rng;
pub mod risk;
pub mod sampler;
pub mod search;
pub mod simplex;
pub mod vcbound;
pub mod weights;

use std::fmt;

use serde::{Deserialize, Serialize};

pub use error::{Error, Result};
pub use estimator::{rho_hat, rho_hat_batch, Certificate, RhoEstimate};
pub use market::{Bounds, DriverPath, MarketScenario, ScenarioKind, Strategy, StrategyRule};
pub use risk::{Density, RiskSpec, ScenarioMeasure};
pub use sampler::{build_bank, SampleBank};
pub use search::{run_search, GridSpec, SearchResult};
pub use vcbound::{plan_samples, BoundVariant, SamplePlan};
pub use weights::{compute_constants, Eta, StrategyParams, TiltedWeights};

/// Positive or negative part of a weight process.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Sign {
    #[serde(rename = "+")]
    Plus,
    #[serde(rename = "-")]
    Minus,
}

impl Sign {
    /// `v^+ = max(v, 0)` or `v^- = max(-v, 0)`.
    pub fn part(self, v: f64) -> f64 {
        match self {
            Sign::Plus => v.max(0.0),
            Sign::Minus => (-v).max(0.0),
        }
    }

    pub fn symbol(self) -> &'static str {
        match self {
            Sign::Plus => "+",
            Sign::Minus => "-",
        }
    }
}

impl fmt::Display for Sign {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.symbol())
    }
}

impl std::str::FromStr for Sign {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "+" | "plus" => Ok(Sign::Plus),
            "-" | "minus" => Ok(Sign::Minus),
            other => Err(Error::Argument(format!("unknown sign `{other}`"))),
        }
    }
}
