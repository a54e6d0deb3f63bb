//! Uniform deviation bounds and certified sample sizes.
//!
//! The sets `{lambda(s) - Z > 0}` are cut out by halfspaces in the
//! `(m+1)`-dimensional span of `v(f_1), ..., v(f_m), Z`, so their VC
//! dimension is at most `m + 1`. With `n` iid samples the probability that
//! some empirical frequency is off by more than `x` is at most
//!
//! ```text
//! devroye: 4 n^{2V} exp(-2 n x^2 + 4 x + 4 x^2)
//! basic:   8 s_n exp(-n x^2 / 32),  s_n <= n^V for n >= 2V
//! ```
//!
//! Frequencies of a tilted measure with normalizer `d` enter the capital
//! estimate multiplied by `d`, so a precision `epsilon` needs `x = epsilon / d`.
//! All arithmetic is done on the log of the bound; `n^{2V}` overflows `f64`
//! long before the exponential takes over.

use std::fmt::Write as _;

use num_bigint::BigUint;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::simplex::{LinearProgram, Relation};
use crate::weights::TiltedWeights;
use crate::Sign;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BoundVariant {
    /// `4 n^{2V} exp(-2 n x^2 + 4 x + 4 x^2)`.
    #[default]
    Devroye,
    /// `8 n^V exp(-n x^2 / 32)` (trivial `2^n` shatter bound below `n = 2V`).
    Basic,
}

impl BoundVariant {
    pub fn name(self) -> &'static str {
        match self {
            BoundVariant::Devroye => "devroye",
            BoundVariant::Basic => "basic",
        }
    }
}

/// VC dimension bound for halfspaces in the span of `m` weight processes
/// and the threshold variable.
pub fn halfspace_vc_dim(m: usize) -> usize {
    m + 1
}

/// Shatter-coefficient bound: `n^V` when `n > 2V` and `V > 2`, otherwise
/// the trivial `2^n`.
pub fn sauer_bound(n: u64, vc_dim: u32) -> BigUint {
    if vc_dim > 2 && n > 2 * vc_dim as u64 {
        BigUint::from(n).pow(vc_dim)
    } else {
        BigUint::from(1u8) << n
    }
}

/// Point sets larger than this are not enumerated.
pub const MAX_SHATTER_POINTS: usize = 20;

/// Number of distinct subsets `{x : r . x > 0}` of `points` over all `r`.
///
/// Builds sign patterns point by point and keeps a partial pattern only if
/// the linear system `r . x_j >= 1` (inside), `r . x_j <= 0` (outside) is
/// feasible, so the work is proportional to the number of realisable
/// patterns rather than `2^n`.
pub fn empirical_shatter(points: &[Vec<f64>]) -> Result<usize> {
    if points.len() > MAX_SHATTER_POINTS {
        return Err(Error::SizeLimit {
            what: "shatter point set",
            size: points.len(),
            limit: MAX_SHATTER_POINTS,
        });
    }
    let dim = points.first().map_or(0, Vec::len);
    if points.iter().any(|p| p.len() != dim) {
        return Err(Error::Argument("points must share one dimension".into()));
    }
    let mut count = 0;
    let mut pattern = Vec::with_capacity(points.len());
    extend_pattern(points, dim, &mut pattern, &mut count);
    Ok(count)
}

fn extend_pattern(points: &[Vec<f64>], dim: usize, pattern: &mut Vec<bool>, count: &mut usize) {
    if pattern.len() == points.len() {
        *count += 1;
        return;
    }
    for inside in [false, true] {
        pattern.push(inside);
        if halfspace_feasible(points, dim, pattern) {
            extend_pattern(points, dim, pattern, count);
        }
        pattern.pop();
    }
}

fn halfspace_feasible(points: &[Vec<f64>], dim: usize, pattern: &[bool]) -> bool {
    // r = r_plus - r_minus, both nonnegative
    let mut lp = LinearProgram::new(vec![0.0; 2 * dim]);
    for (p, &inside) in points.iter().zip(pattern) {
        let row: Vec<f64> = p.iter().copied().chain(p.iter().map(|x| -x)).collect();
        if inside {
            lp.constrain(row, Relation::Ge, 1.0);
        } else {
            lp.constrain(row, Relation::Le, 0.0);
        }
    }
    lp.solve().is_ok()
}

/// Natural log of the deviation bound for `n` samples at relative
/// precision `x`.
pub fn log_deviation_bound(n: u64, x: f64, vc_dim: usize, variant: BoundVariant) -> f64 {
    let nf = n as f64;
    let v = vc_dim as f64;
    match variant {
        BoundVariant::Devroye => {
            4f64.ln() + 2.0 * v * nf.ln() - 2.0 * nf * x * x + 4.0 * x + 4.0 * x * x
        }
        BoundVariant::Basic => {
            let log_shatter = if n >= 2 * vc_dim as u64 {
                v * nf.ln()
            } else {
                nf * std::f64::consts::LN_2
            };
            8f64.ln() + log_shatter - nf * x * x / 32.0
        }
    }
}

/// Upper bound on `P(sup |empirical - true| > x)` from `n` iid samples.
pub fn deviation_bound(n: u64, x: f64, vc_dim: usize, variant: BoundVariant) -> f64 {
    log_deviation_bound(n, x, vc_dim, variant).exp()
}

/// Smallest `n` whose deviation bound at precision `x` is at most `delta`.
///
/// The log bound is concave in `n` on `[1, inf)` for the Devroye form and on
/// `[2V, inf)` for the basic form, so past its peak it is decreasing and the
/// crossing is found by doubling then bisection. Below the concave range
/// (basic form only) the few candidates are checked directly.
pub fn minimal_sample_size(x: f64, delta: f64, vc_dim: usize, variant: BoundVariant) -> u64 {
    assert!(x > 0.0 && delta > 0.0 && delta < 1.0);
    let target = delta.ln();
    let passes = |n: u64| log_deviation_bound(n, x, vc_dim, variant) <= target;
    let v = vc_dim as f64;
    let (concave_from, peak) = match variant {
        BoundVariant::Devroye => (1u64, v / (x * x)),
        BoundVariant::Basic => {
            let start = 2 * vc_dim as u64;
            if let Some(n) = (1..start).find(|&n| passes(n)) {
                return n;
            }
            (start.max(1), 32.0 * v / (x * x))
        }
    };
    if passes(concave_from) {
        return concave_from;
    }
    let mut lo = (peak.floor() as u64).max(concave_from);
    if passes(lo) {
        // only reachable when the peak rounds below the first failure
        lo = concave_from;
    }
    let mut hi = lo.max(1) * 2;
    while !passes(hi) {
        lo = hi;
        hi *= 2;
    }
    while hi - lo > 1 {
        let mid = lo + (hi - lo) / 2;
        if passes(mid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    hi
}

/// Smallest relative precision `x` certified by `n` samples at level `delta`.
/// Infinite when no precision is certified (Devroye form with `n <= 2`).
pub fn certified_ratio(n: u64, delta: f64, vc_dim: usize, variant: BoundVariant) -> f64 {
    let target = delta.ln();
    match variant {
        BoundVariant::Basic => {
            let c = log_deviation_bound(n, 0.0, vc_dim, variant);
            if c <= target {
                0.0
            } else {
                (32.0 * (c - target) / n as f64).sqrt()
            }
        }
        BoundVariant::Devroye => {
            if n <= 2 {
                return f64::INFINITY;
            }
            let passes = |x: f64| log_deviation_bound(n, x, vc_dim, variant) <= target;
            let mut lo = 1.0 / (n as f64 - 2.0);
            let mut hi = 2.0 * lo;
            while !passes(hi) {
                lo = hi;
                hi *= 2.0;
            }
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                if mid <= lo || mid >= hi {
                    break;
                }
                if passes(mid) {
                    hi = mid;
                } else {
                    lo = mid;
                }
            }
            hi
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanEntry {
    pub measure: usize,
    pub sign: Sign,
    /// `d_i^{+/-}`.
    pub normalizer: f64,
    /// `epsilon / d`.
    pub ratio: f64,
    pub kappa: u64,
    /// Deviation bound at `(kappa, ratio)`; at most `delta`.
    pub bound: f64,
}

/// Sample sizes per nonzero tilted measure with their certificate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplePlan {
    pub epsilon: f64,
    pub delta: f64,
    pub vc_dim: usize,
    pub variant: BoundVariant,
    pub entries: Vec<PlanEntry>,
    /// True when the sizes were supplied rather than minimised.
    pub budgeted: bool,
    pub warnings: Vec<String>,
}

fn check_precision(epsilon: f64, delta: f64) -> Result<()> {
    if !(epsilon > 0.0 && epsilon.is_finite()) {
        return Err(Error::Config(format!("epsilon must be positive, got {epsilon}")));
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::Config(format!("delta must lie in (0, 1), got {delta}")));
    }
    Ok(())
}

/// Minimal certified sample size for every nonzero `(i, sign)`.
pub fn plan_samples(
    weights: &TiltedWeights,
    epsilon: f64,
    delta: f64,
    variant: BoundVariant,
) -> Result<SamplePlan> {
    check_precision(epsilon, delta)?;
    let vc_dim = halfspace_vc_dim(weights.m());
    let entries: Vec<PlanEntry> = weights
        .nonzero_pairs()
        .into_iter()
        .map(|(measure, sign)| {
            let normalizer = weights.measure(measure).normalizer(sign);
            let ratio = epsilon / normalizer;
            let kappa = minimal_sample_size(ratio, delta, vc_dim, variant);
            PlanEntry {
                measure,
                sign,
                normalizer,
                ratio,
                kappa,
                bound: deviation_bound(kappa, ratio, vc_dim, variant),
            }
        })
        .collect();
    let mut warnings = Vec::new();
    if entries.is_empty() {
        warnings.push(
            "every weight process vanishes (aleph = 0); nothing to sample, rho(W(xi)) is constant"
                .to_string(),
        );
    }
    if !weights.is_exact() {
        warnings.push(
            "normalizers were estimated by Monte Carlo; the certificate assumes exact constants"
                .to_string(),
        );
    }
    Ok(SamplePlan {
        epsilon,
        delta,
        vc_dim,
        variant,
        entries,
        budgeted: false,
        warnings,
    })
}

impl SamplePlan {
    /// Plan with given sample sizes. Without `epsilon` the tightest
    /// precision the sizes certify is used; with it, the sizes must certify
    /// that precision.
    pub fn from_budgets(
        weights: &TiltedWeights,
        budgets: &[(usize, Sign, u64)],
        epsilon: Option<f64>,
        delta: f64,
        variant: BoundVariant,
    ) -> Result<Self> {
        let vc_dim = halfspace_vc_dim(weights.m());
        let pairs = weights.nonzero_pairs();
        let mut kappas = Vec::with_capacity(pairs.len());
        for &(measure, sign) in &pairs {
            let kappa = budgets
                .iter()
                .find(|b| b.0 == measure && b.1 == sign)
                .map(|b| b.2)
                .ok_or_else(|| {
                    Error::Config(format!(
                        "no budget for tilted measure ({}, {sign})",
                        measure + 1
                    ))
                })?;
            if kappa == 0 {
                return Err(Error::Config("budgets must be positive".into()));
            }
            kappas.push(kappa);
        }
        let certified = pairs
            .iter()
            .zip(&kappas)
            .map(|(&(i, sign), &k)| {
                weights.measure(i).normalizer(sign) * certified_ratio(k, delta, vc_dim, variant)
            })
            .fold(0.0, f64::max);
        let epsilon = match epsilon {
            Some(eps) => {
                if certified > eps {
                    return Err(Error::Certification(format!(
                        "budgets certify epsilon = {certified:.6}, not the requested {eps}"
                    )));
                }
                eps
            }
            None if pairs.is_empty() => {
                return Err(Error::Config("nothing to sample; give epsilon explicitly".into()))
            }
            None => certified,
        };
        check_precision(epsilon, delta)?;
        let entries = pairs
            .iter()
            .zip(kappas)
            .map(|(&(measure, sign), kappa)| {
                let normalizer = weights.measure(measure).normalizer(sign);
                let ratio = epsilon / normalizer;
                PlanEntry {
                    measure,
                    sign,
                    normalizer,
                    ratio,
                    kappa,
                    bound: deviation_bound(kappa, ratio, vc_dim, variant),
                }
            })
            .collect();
        let mut warnings = Vec::new();
        if !weights.is_exact() {
            warnings.push(
                "normalizers were estimated by Monte Carlo; the certificate assumes exact constants"
                    .to_string(),
            );
        }
        Ok(Self {
            epsilon,
            delta,
            vc_dim,
            variant,
            entries,
            budgeted: true,
            warnings,
        })
    }

    pub fn aleph(&self) -> usize {
        self.entries.len()
    }

    pub fn kappa(&self, measure: usize, sign: Sign) -> Option<u64> {
        self.entries
            .iter()
            .find(|e| e.measure == measure && e.sign == sign)
            .map(|e| e.kappa)
    }

    pub fn total_samples(&self) -> u64 {
        self.entries.iter().map(|e| e.kappa).sum()
    }

    /// Failure probability of the uniform certificate, `aleph * delta`.
    pub fn failure_mass(&self) -> f64 {
        self.aleph() as f64 * self.delta
    }

    pub fn report_table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "epsilon = {}  delta = {}  VC dim = {}  bound = {}  aleph = {}",
            self.epsilon,
            self.delta,
            self.vc_dim,
            self.variant.name(),
            self.aleph()
        );
        let _ = writeln!(
            out,
            "{:>3} {:>4} {:>14} {:>14} {:>14} {:>12}",
            "i", "sign", "d", "eps/d", "kappa", "bound"
        );
        for e in &self.entries {
            let _ = writeln!(
                out,
                "{:>3} {:>4} {:>14.6} {:>14.6e} {:>14} {:>12.4e}",
                e.measure + 1,
                e.sign,
                e.normalizer,
                e.ratio,
                e.kappa,
                e.bound
            );
        }
        for w in &self.warnings {
            let _ = writeln!(out, "warning: {w}");
        }
        out
    }
}

/// Minimal sample sizes under both bounds, side by side.
pub fn comparison_table(weights: &TiltedWeights, epsilon: f64, delta: f64) -> Result<String> {
    let devroye = plan_samples(weights, epsilon, delta, BoundVariant::Devroye)?;
    let basic = plan_samples(weights, epsilon, delta, BoundVariant::Basic)?;
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:>3} {:>4} {:>14} {:>16} {:>16} {:>8}",
        "i", "sign", "eps/d", "kappa devroye", "kappa basic", "ratio"
    );
    for (d, b) in devroye.entries.iter().zip(&basic.entries) {
        let _ = writeln!(
            out,
            "{:>3} {:>4} {:>14.6e} {:>16} {:>16} {:>8.1}",
            d.measure + 1,
            d.sign,
            d.ratio,
            d.kappa,
            b.kappa,
            b.kappa as f64 / d.kappa as f64
        );
    }
    Ok(out)
}
