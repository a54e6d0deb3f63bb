//! `rho_hat(s)` from a sample bank.
//!
//! For every nonzero tilted measure the bank holds samples `(features, Z)`;
//! the frequency of `features . s - Z > 0` estimates
//! `mu_i^{+/-}{lambda(s) - Z > 0}`. Then
//!
//! ```text
//! D_i(s) = -d_i^+ E_i^+(s) + d_i^- E_i^-(s) - c_i + alpha_i
//! rho_hat(s) = max_i D_i(s)
//! ```
//!
//! Counts are integers and every dot product is accumulated in the same
//! order, so single-point and batched evaluation agree bit for bit on any
//! number of threads.

use std::fmt;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::risk::sup_with_index;
use crate::sampler::{SampleBank, SampleList};
use crate::vcbound::{BoundVariant, SamplePlan};
use crate::weights::{dot, TiltedWeights};
use crate::Sign;

/// Samples per work unit when scanning a list.
const SCAN_CHUNK: usize = 16_384;

/// The uniform error statement attached to every estimate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Certificate {
    /// Precision of each scaled frequency `d * E`.
    pub epsilon: f64,
    pub delta: f64,
    pub aleph: usize,
    pub variant: BoundVariant,
    /// Bound on `sup_s |rho_hat(s) - rho(W(xi(s)))|`: `epsilon` times the
    /// largest number of nonzero signs of one measure.
    pub sup_error: f64,
    /// `aleph * delta`.
    pub failure_mass: f64,
    /// `max(0, 1 - aleph * delta)`.
    pub confidence: f64,
    /// False when any constant came from Monte Carlo; the statement then
    /// holds only up to the constants' own error.
    pub exact_constants: bool,
}

impl Certificate {
    pub fn from_plan(plan: &SamplePlan, exact_constants: bool) -> Self {
        let mut per_measure = std::collections::BTreeMap::new();
        for e in &plan.entries {
            *per_measure.entry(e.measure).or_insert(0usize) += 1;
        }
        let multiplicity = per_measure.values().copied().max().unwrap_or(0);
        let failure_mass = plan.aleph() as f64 * plan.delta;
        Self {
            epsilon: plan.epsilon,
            delta: plan.delta,
            aleph: plan.aleph(),
            variant: plan.variant,
            sup_error: plan.epsilon * multiplicity.max(1) as f64,
            failure_mass,
            confidence: (1.0 - failure_mass).max(0.0),
            exact_constants,
        }
    }
}

impl fmt::Display for Certificate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "with probability at least {:.4} (aleph = {}, delta = {}), sup_s |rho_hat(s) - rho(W(xi(s)))| <= {} (epsilon = {}, {} bound)",
            self.confidence,
            self.aleph,
            self.delta,
            self.sup_error,
            self.epsilon,
            self.variant.name()
        )?;
        if !self.exact_constants {
            f.write_str("; uncertified: constants estimated by Monte Carlo")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RhoEstimate {
    pub s: Vec<f64>,
    pub rho_hat: f64,
    /// `D_i(s)` for every measure.
    pub per_i: Vec<f64>,
    pub argmax_i: usize,
    pub certificate: Certificate,
}

/// Number of samples with `features . s - z > 0`.
pub fn count_exceedances(list: &SampleList, s: &[f64]) -> Result<u64> {
    Ok(count_batch(list, &[s.to_vec()])?[0])
}

/// Fraction of samples with `features . s - z > 0`.
pub fn empirical_frequency(list: &SampleList, s: &[f64]) -> Result<f64> {
    if list.is_empty() {
        return Err(Error::ZeroMeasure {
            measure: list.measure,
            sign: list.sign,
        });
    }
    Ok(count_exceedances(list, s)? as f64 / list.len() as f64)
}

fn count_batch(list: &SampleList, grid: &[Vec<f64>]) -> Result<Vec<u64>> {
    if let Some(bad) = grid.iter().find(|s| s.len() != list.m) {
        return Err(Error::DimensionMismatch {
            expected: list.m,
            got: bad.len(),
        });
    }
    let chunks = list.len().div_ceil(SCAN_CHUNK);
    let partial: Vec<Vec<u64>> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let lo = c * SCAN_CHUNK;
            let hi = (lo + SCAN_CHUNK).min(list.len());
            let mut counts = vec![0u64; grid.len()];
            for k in lo..hi {
                let features = list.features_of(k);
                let z = list.z[k];
                for (count, s) in counts.iter_mut().zip(grid) {
                    if dot(features, s) - z > 0.0 {
                        *count += 1;
                    }
                }
            }
            counts
        })
        .collect();
    let mut total = vec![0u64; grid.len()];
    for counts in partial {
        for (t, c) in total.iter_mut().zip(counts) {
            *t += c;
        }
    }
    Ok(total)
}

/// Checks that `bank` was drawn for `weights`: same measures, every
/// nonzero tilted measure present with the same normalizer.
pub fn check_bank(weights: &TiltedWeights, bank: &SampleBank) -> Result<()> {
    if bank.m() != weights.m() {
        return Err(Error::Certification(format!(
            "bank has {} measures, weights have {}",
            bank.m(),
            weights.m()
        )));
    }
    let pairs = weights.nonzero_pairs();
    if pairs.len() != bank.lists.len() {
        return Err(Error::Certification(format!(
            "bank covers {} tilted measures, weights have {}",
            bank.lists.len(),
            pairs.len()
        )));
    }
    for (i, sign) in pairs {
        let list = bank.list(i, sign).ok_or_else(|| {
            Error::Certification(format!("bank has no samples for ({}, {sign})", i + 1))
        })?;
        let d = weights.measure(i).normalizer(sign);
        if (list.normalizer - d).abs() > 1e-9 * d.max(1.0) {
            return Err(Error::Certification(format!(
                "bank normalizer {} for ({}, {sign}) differs from {d}",
                list.normalizer,
                i + 1
            )));
        }
        if (bank.c[i] - weights.measure(i).c).abs() > 1e-9 * weights.measure(i).c.abs().max(1.0) {
            return Err(Error::Certification(format!(
                "bank constant c_{} differs from the weights",
                i + 1
            )));
        }
    }
    Ok(())
}

/// `D_i(s)` for one measure.
pub fn d_i_of_s(bank: &SampleBank, i: usize, s: &[f64]) -> Result<f64> {
    if i >= bank.m() {
        return Err(Error::Argument(format!("measure index {i} out of range")));
    }
    let mut value = bank.alpha[i] - bank.c[i];
    for sign in [Sign::Plus, Sign::Minus] {
        if let Some(list) = bank.list(i, sign) {
            let e = empirical_frequency(list, s)?;
            match sign {
                Sign::Plus => value -= list.normalizer * e,
                Sign::Minus => value += list.normalizer * e,
            }
        }
    }
    Ok(value)
}

/// `rho_hat(s)` with its certificate.
pub fn rho_hat(bank: &SampleBank, s: &[f64]) -> Result<RhoEstimate> {
    Ok(rho_hat_batch(bank, &[s.to_vec()])?.remove(0))
}

/// `rho_hat` at every point of `grid`, one pass over each list.
pub fn rho_hat_batch(bank: &SampleBank, grid: &[Vec<f64>]) -> Result<Vec<RhoEstimate>> {
    if grid.is_empty() {
        return Err(Error::Argument("empty grid".into()));
    }
    let m = bank.m();
    if let Some(bad) = grid.iter().find(|s| s.len() != m) {
        return Err(Error::DimensionMismatch {
            expected: m,
            got: bad.len(),
        });
    }
    let mut d: Vec<Vec<f64>> = grid
        .iter()
        .map(|_| (0..m).map(|i| bank.alpha[i] - bank.c[i]).collect())
        .collect();
    for list in &bank.lists {
        if list.is_empty() {
            return Err(Error::ZeroMeasure {
                measure: list.measure,
                sign: list.sign,
            });
        }
        let counts = count_batch(list, grid)?;
        let n = list.len() as f64;
        for (row, count) in d.iter_mut().zip(counts) {
            let e = count as f64 / n;
            match list.sign {
                Sign::Plus => row[list.measure] -= list.normalizer * e,
                Sign::Minus => row[list.measure] += list.normalizer * e,
            }
        }
    }
    let certificate = bank.certificate();
    Ok(grid
        .iter()
        .zip(d)
        .map(|(s, per_i)| {
            let (rho_hat, argmax_i) = sup_with_index(&per_i);
            RhoEstimate {
                s: s.clone(),
                rho_hat,
                per_i,
                argmax_i,
                certificate,
            }
        })
        .collect())
}

/// One row per estimate: `s_1..s_m, D_1..D_m, rho_hat`.
pub fn write_estimates_csv(estimates: &[RhoEstimate], path: impl AsRef<Path>) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    if let Some(first) = estimates.first() {
        let m = first.s.len();
        let mut head: Vec<String> = (1..=m).map(|i| format!("s{i}")).collect();
        head.extend((1..=m).map(|i| format!("D{i}")));
        head.push("rho_hat".into());
        w.write_record(&head)?;
    }
    for e in estimates {
        let mut row: Vec<String> = e.s.iter().map(f64::to_string).collect();
        row.extend(e.per_i.iter().map(f64::to_string));
        row.push(e.rho_hat.to_string());
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}
