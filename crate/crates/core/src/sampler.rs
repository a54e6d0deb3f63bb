//! Samples from the tilted measures.
//!
//! The tilted measure `mu_i^{+/-}` lives on pairs `(path, t)` and has
//! density `v_t^{+/-}(f_i) / d_i^{+/-}` with respect to `P` times counting
//! measure on the periods. Each sample also carries an independent threshold
//! `Z ~ eta` and the feature vector `(v_t(f_1), ..., v_t(f_m))` at its
//! `(path, t)`, which is all the estimator needs: the frequency of
//! `{lambda_t(s) - Z > 0}` estimates `mu{...} = E_mu[eta(lambda_t(s))]`.
//!
//! Routes:
//!
//! * Gaussian drivers with per-period bounds: direct. `v_t = (b_t - a_t)
//!   L_t S_t (g - 1)` has a fixed sign, `t` has law proportional to
//!   `(b_t - a_t) g^t`, and given `t` the first `t` drivers are
//!   `N(theta + vol, 1)` and the rest standard normal.
//! * Finite trees: direct, from the exact table of node weights.
//! * Rejection against `P x uniform(t)` with an envelope `M >= v^{+/-}`.
//!   Seeing a weight above `M` is an error, never a silent truncation.
//!
//! Banks are drawn in fixed-size chunks, each from its own seeded stream,
//! so the contents depend only on the seed and the plan.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;
use std::sync::Arc;

use rand::Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::estimator::Certificate;
use crate::market::{sample_categorical, DriverPath, MarketScenario, Model};
use crate::rng::{stream, stream_id, Purpose};
use crate::vcbound::SamplePlan;
use crate::weights::{Eta, TiltedWeights};
use crate::Sign;

/// Samples per seeded stream when building a bank.
pub const BANK_CHUNK: usize = 4096;

/// Rejection proposals allowed per accepted sample before giving up.
const MAX_PROPOSALS: usize = 10_000_000;

/// One draw `(path, t, Z)` from a tilted measure.
#[derive(Debug, Clone, PartialEq)]
pub struct TiltedSample {
    pub path: DriverPath,
    pub t: usize,
    pub z: f64,
    pub features: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "route", rename_all = "kebab-case")]
pub enum SamplerRoute {
    /// Direct sampling where available.
    #[default]
    Direct,
    /// Rejection from `P x uniform(t)`; `envelope` must dominate `v^{+/-}`.
    Rejection { envelope: f64 },
}

enum Plan {
    Gaussian {
        /// Cumulative law of `t`.
        period_cdf: Vec<f64>,
        tilted: Normal<f64>,
    },
    Tree {
        /// `(t, node)` per table entry with cumulative weight.
        nodes: Vec<(usize, usize)>,
        cumulative: Vec<f64>,
    },
    Rejection {
        envelope: f64,
    },
}

/// Draws from one tilted measure `mu_i^{sign}`.
pub struct TiltedSampler<'a> {
    weights: &'a TiltedWeights,
    measure: usize,
    sign: Sign,
    eta: Eta,
    plan: Plan,
}

impl<'a> TiltedSampler<'a> {
    pub fn new(
        weights: &'a TiltedWeights,
        measure: usize,
        sign: Sign,
        eta: Eta,
        route: SamplerRoute,
    ) -> Result<Self> {
        if measure >= weights.m() {
            return Err(Error::Argument(format!("measure index {measure} out of range")));
        }
        if weights.measure(measure).normalizer(sign) <= 0.0 {
            return Err(Error::ZeroMeasure { measure, sign });
        }
        let scenario = weights.scenario();
        let plan = match route {
            SamplerRoute::Rejection { envelope } => {
                if !(envelope > 0.0 && envelope.is_finite()) {
                    return Err(Error::Argument("rejection envelope must be positive".into()));
                }
                Plan::Rejection { envelope }
            }
            SamplerRoute::Direct => match scenario.model() {
                Model::Gbm(gbm) => {
                    let (lower, upper) = scenario.bounds().per_period().ok_or_else(|| {
                        Error::Config(
                            "path-dependent bounds on gaussian drivers need the rejection route"
                                .into(),
                        )
                    })?;
                    let density = &weights.spec().measures[measure].density;
                    let g = density.mean_growth(scenario);
                    let theta = density.normal_shift().ok_or_else(|| Error::MissingEvaluator {
                        measure,
                        reason: "density has no gaussian tilt".into(),
                    })?;
                    let mut acc = 0.0;
                    let mut period_cdf = Vec::with_capacity(gbm.horizon);
                    for t in 0..gbm.horizon {
                        acc += (upper[t] - lower[t]) * g.powi(t as i32);
                        period_cdf.push(acc);
                    }
                    Plan::Gaussian {
                        period_cdf,
                        tilted: Normal::new(theta + gbm.vol, 1.0).expect("unit variance"),
                    }
                }
                Model::Tree(tree) => {
                    let k = tree.branches.len();
                    let mut nodes = Vec::new();
                    let mut cumulative = Vec::new();
                    let mut acc = 0.0;
                    for t in 0..tree.horizon {
                        for node in 0..k.pow(t as u32) {
                            let path = node_path(scenario, t, node)?;
                            let prob = tree.prefix_probability(path.prefix(t))?;
                            let w = prob * sign.part(weights.v(measure, &path, t)?);
                            if w > 0.0 {
                                acc += w;
                                nodes.push((t, node));
                                cumulative.push(acc);
                            }
                        }
                    }
                    Plan::Tree { nodes, cumulative }
                }
            },
        };
        Ok(Self {
            weights,
            measure,
            sign,
            eta,
            plan,
        })
    }

    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<TiltedSample> {
        let scenario = self.weights.scenario();
        let horizon = scenario.horizon();
        let (path, t) = match &self.plan {
            Plan::Gaussian { period_cdf, tilted } => {
                let total = *period_cdf.last().expect("positive horizon");
                let u = rng.random::<f64>() * total;
                let t = period_cdf.partition_point(|&c| c <= u).min(horizon - 1);
                let drivers: Vec<f64> = (0..horizon)
                    .map(|k| {
                        if k < t {
                            tilted.sample(rng)
                        } else {
                            rng.sample(StandardNormal)
                        }
                    })
                    .collect();
                (scenario.path_from_drivers(drivers)?, t)
            }
            Plan::Tree { nodes, cumulative } => {
                let tree = scenario.as_tree().expect("tree plan");
                let total = *cumulative.last().expect("nonzero measure");
                let u = rng.random::<f64>() * total;
                let j = cumulative.partition_point(|&c| c <= u).min(nodes.len() - 1);
                let (t, node) = nodes[j];
                let probs: Vec<f64> = tree.branches.iter().map(|b| b.prob).collect();
                let mut drivers: Vec<f64> = tree
                    .node_branches(t, node)
                    .into_iter()
                    .map(|b| tree.branches[b].driver)
                    .collect();
                while drivers.len() < horizon {
                    drivers.push(tree.branches[sample_categorical(&probs, rng)].driver);
                }
                (scenario.path_from_drivers(drivers)?, t)
            }
            Plan::Rejection { envelope } => self.propose_until_accepted(*envelope, rng)?,
        };
        let features = self.weights.features(&path, t)?;
        let z = self.eta.sample(rng);
        Ok(TiltedSample {
            path,
            t,
            z,
            features,
        })
    }

    fn propose_until_accepted<R: Rng + ?Sized>(
        &self,
        envelope: f64,
        rng: &mut R,
    ) -> Result<(DriverPath, usize)> {
        let scenario = self.weights.scenario();
        let horizon = scenario.horizon();
        for _ in 0..MAX_PROPOSALS {
            let path = scenario.sample_path(rng);
            let t = rng.random_range(0..horizon);
            let w = self.sign.part(self.weights.v(self.measure, &path, t)?);
            if w > envelope {
                return Err(Error::Argument(format!(
                    "rejection envelope {envelope} is below an observed weight {w} of measure ({}, {})",
                    self.measure + 1,
                    self.sign
                )));
            }
            if rng.random::<f64>() * envelope < w {
                return Ok((path, t));
            }
        }
        Err(Error::Argument(format!(
            "rejection sampler accepted nothing in {MAX_PROPOSALS} proposals"
        )))
    }
}

fn node_path(scenario: &MarketScenario, t: usize, node: usize) -> Result<DriverPath> {
    let tree = scenario.as_tree().expect("tree scenario");
    let mut drivers: Vec<f64> = tree
        .node_branches(t, node)
        .into_iter()
        .map(|b| tree.branches[b].driver)
        .collect();
    drivers.resize(scenario.horizon(), tree.branches[0].driver);
    scenario.path_from_drivers(drivers)
}

/// `n` independent draws from `mu_i^{sign}` via the default route.
pub fn sample_tilted<R: Rng + ?Sized>(
    weights: &TiltedWeights,
    measure: usize,
    sign: Sign,
    eta: Eta,
    n: usize,
    rng: &mut R,
) -> Result<Vec<TiltedSample>> {
    let sampler = TiltedSampler::new(weights, measure, sign, eta, SamplerRoute::Direct)?;
    (0..n).map(|_| sampler.draw(rng)).collect()
}

/// Samples of one tilted measure in columnar form.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleList {
    pub measure: usize,
    pub sign: Sign,
    /// `d_i^{sign}`.
    pub normalizer: f64,
    pub m: usize,
    pub horizon: usize,
    pub t: Vec<u32>,
    pub z: Vec<f64>,
    /// Row-major, `m` per sample.
    pub features: Vec<f64>,
    /// Row-major, `horizon` per sample.
    pub drivers: Vec<f64>,
}

impl SampleList {
    fn empty(measure: usize, sign: Sign, normalizer: f64, m: usize, horizon: usize) -> Self {
        Self {
            measure,
            sign,
            normalizer,
            m,
            horizon,
            t: Vec::new(),
            z: Vec::new(),
            features: Vec::new(),
            drivers: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.z.len()
    }

    pub fn is_empty(&self) -> bool {
        self.z.is_empty()
    }

    pub fn features_of(&self, k: usize) -> &[f64] {
        &self.features[k * self.m..(k + 1) * self.m]
    }

    pub fn drivers_of(&self, k: usize) -> &[f64] {
        &self.drivers[k * self.horizon..(k + 1) * self.horizon]
    }

    fn push(&mut self, s: TiltedSample) {
        self.t.push(s.t as u32);
        self.z.push(s.z);
        self.features.extend_from_slice(&s.features);
        self.drivers.extend_from_slice(&s.path.drivers);
    }

    fn append(&mut self, other: SampleList) {
        self.t.extend(other.t);
        self.z.extend(other.z);
        self.features.extend(other.features);
        self.drivers.extend(other.drivers);
    }

    /// The first `n` samples.
    pub fn truncated(&self, n: usize) -> Self {
        let n = n.min(self.len());
        Self {
            t: self.t[..n].to_vec(),
            z: self.z[..n].to_vec(),
            features: self.features[..n * self.m].to_vec(),
            drivers: self.drivers[..n * self.horizon].to_vec(),
            ..self.clone()
        }
    }
}

/// Everything needed to evaluate `rho_hat(s)`: the sample lists, their
/// plan, and the constants `c_i`, `alpha_i`.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleBank {
    pub key: String,
    pub seed: u64,
    pub eta: Eta,
    pub plan: SamplePlan,
    pub c: Vec<f64>,
    pub alpha: Vec<f64>,
    pub exact_constants: bool,
    pub lists: Vec<SampleList>,
}

impl SampleBank {
    pub fn m(&self) -> usize {
        self.c.len()
    }

    pub fn certificate(&self) -> Certificate {
        Certificate::from_plan(&self.plan, self.exact_constants)
    }

    pub fn list(&self, measure: usize, sign: Sign) -> Option<&SampleList> {
        self.lists
            .iter()
            .find(|l| l.measure == measure && l.sign == sign)
    }

    pub fn total_samples(&self) -> usize {
        self.lists.iter().map(SampleList::len).sum()
    }
}

/// Hash identifying the inputs a bank was drawn from.
pub fn bank_key(weights: &TiltedWeights, eta: Eta, plan: &SamplePlan, seed: u64) -> String {
    let mut h = Sha256::new();
    let model = serde_json::to_string(weights.scenario().model()).expect("model serialises");
    h.update(model.as_bytes());
    h.update(format!("{:?}", weights.scenario().bounds()).as_bytes());
    h.update(serde_json::to_string(weights.spec()).expect("spec serialises").as_bytes());
    h.update(eta.name().as_bytes());
    h.update(plan.epsilon.to_le_bytes());
    h.update(plan.delta.to_le_bytes());
    h.update(seed.to_le_bytes());
    for e in &plan.entries {
        h.update((e.measure as u64).to_le_bytes());
        h.update(e.sign.symbol().as_bytes());
        h.update(e.kappa.to_le_bytes());
    }
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

/// Draws every list of `plan` with the default route.
pub fn build_bank(weights: &TiltedWeights, plan: &SamplePlan, seed: u64, eta: Eta) -> Result<SampleBank> {
    build_bank_with(weights, plan, seed, eta, SamplerRoute::Direct)
}

/// Draws every list of `plan` with the given route. Chunks run in parallel
/// on the current rayon pool; results do not depend on the pool size.
pub fn build_bank_with(
    weights: &TiltedWeights,
    plan: &SamplePlan,
    seed: u64,
    eta: Eta,
    route: SamplerRoute,
) -> Result<SampleBank> {
    if plan.vc_dim != weights.m() + 1 {
        return Err(Error::DimensionMismatch {
            expected: weights.m() + 1,
            got: plan.vc_dim,
        });
    }
    let m = weights.m();
    let horizon = weights.scenario().horizon();
    let mut lists = Vec::with_capacity(plan.entries.len());
    for entry in &plan.entries {
        let sampler = TiltedSampler::new(weights, entry.measure, entry.sign, eta, route)?;
        let n = usize::try_from(entry.kappa)
            .map_err(|_| Error::Argument("sample size exceeds address space".into()))?;
        let chunks = n.div_ceil(BANK_CHUNK);
        let parts: Vec<SampleList> = (0..chunks)
            .into_par_iter()
            .map(|c| {
                let mut rng = stream(seed, stream_id(Purpose::Bank, entry.measure, entry.sign, c as u64));
                let len = BANK_CHUNK.min(n - c * BANK_CHUNK);
                let mut part = SampleList::empty(entry.measure, entry.sign, entry.normalizer, m, horizon);
                for _ in 0..len {
                    part.push(sampler.draw(&mut rng)?);
                }
                Ok(part)
            })
            .collect::<Result<_>>()?;
        let mut list = SampleList::empty(entry.measure, entry.sign, entry.normalizer, m, horizon);
        for part in parts {
            list.append(part);
        }
        lists.push(list);
    }
    Ok(SampleBank {
        key: bank_key(weights, eta, plan, seed),
        seed,
        eta,
        plan: plan.clone(),
        c: weights.constants().iter().map(|c| c.c).collect(),
        alpha: weights.spec().alphas(),
        exact_constants: weights.is_exact(),
        lists,
    })
}

/// Shared handle for banks reused across evaluations.
pub type SharedBank = Arc<SampleBank>;

const MAGIC: &[u8; 8] = b"MCAPBANK";
const FORMAT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct Header {
    key: String,
    seed: u64,
    eta: Eta,
    plan: SamplePlan,
    c: Vec<f64>,
    alpha: Vec<f64>,
    exact_constants: bool,
    m: usize,
    horizon: usize,
    lists: Vec<ListHeader>,
}

#[derive(Serialize, Deserialize)]
struct ListHeader {
    measure: usize,
    sign: Sign,
    normalizer: f64,
    len: usize,
}

impl SampleBank {
    /// Writes the bank in the versioned binary format.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let horizon = self.lists.first().map_or(0, |l| l.horizon);
        let header = Header {
            key: self.key.clone(),
            seed: self.seed,
            eta: self.eta,
            plan: self.plan.clone(),
            c: self.c.clone(),
            alpha: self.alpha.clone(),
            exact_constants: self.exact_constants,
            m: self.m(),
            horizon,
            lists: self
                .lists
                .iter()
                .map(|l| ListHeader {
                    measure: l.measure,
                    sign: l.sign,
                    normalizer: l.normalizer,
                    len: l.len(),
                })
                .collect(),
        };
        let json = serde_json::to_vec(&header)?;
        let mut w = BufWriter::new(File::create(path)?);
        w.write_all(MAGIC)?;
        w.write_all(&FORMAT_VERSION.to_le_bytes())?;
        w.write_all(&(json.len() as u64).to_le_bytes())?;
        w.write_all(&json)?;
        for l in &self.lists {
            for &t in &l.t {
                w.write_all(&t.to_le_bytes())?;
            }
            for column in [&l.z, &l.features, &l.drivers] {
                for x in column {
                    w.write_all(&x.to_le_bytes())?;
                }
            }
        }
        w.flush()?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let mut r = BufReader::new(File::open(path)?);
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(Error::Argument("not a sample bank file".into()));
        }
        let version = u32::from_le_bytes(read_array(&mut r)?);
        if version != FORMAT_VERSION {
            return Err(Error::Argument(format!(
                "bank format version {version} is not supported (expected {FORMAT_VERSION})"
            )));
        }
        let len = u64::from_le_bytes(read_array(&mut r)?) as usize;
        let mut json = vec![0u8; len];
        r.read_exact(&mut json)?;
        let header: Header = serde_json::from_slice(&json)?;
        let mut lists = Vec::with_capacity(header.lists.len());
        for lh in &header.lists {
            let mut list = SampleList::empty(lh.measure, lh.sign, lh.normalizer, header.m, header.horizon);
            list.t = (0..lh.len)
                .map(|_| read_array(&mut r).map(u32::from_le_bytes))
                .collect::<Result<_>>()?;
            list.z = read_f64s(&mut r, lh.len)?;
            list.features = read_f64s(&mut r, lh.len * header.m)?;
            list.drivers = read_f64s(&mut r, lh.len * header.horizon)?;
            lists.push(list);
        }
        Ok(Self {
            key: header.key,
            seed: header.seed,
            eta: header.eta,
            plan: header.plan,
            c: header.c,
            alpha: header.alpha,
            exact_constants: header.exact_constants,
            lists,
        })
    }

    /// One row per sample: `i, sign, t, z, v_1, ..., v_m`.
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        let mut head = vec!["i".to_string(), "sign".into(), "t".into(), "z".into()];
        head.extend((1..=self.m()).map(|i| format!("v{i}")));
        w.write_record(&head)?;
        for l in &self.lists {
            for k in 0..l.len() {
                let mut row = vec![
                    (l.measure + 1).to_string(),
                    l.sign.to_string(),
                    l.t[k].to_string(),
                    l.z[k].to_string(),
                ];
                row.extend(l.features_of(k).iter().map(f64::to_string));
                w.write_record(&row)?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

fn read_array<const N: usize>(r: &mut impl Read) -> Result<[u8; N]> {
    let mut buf = [0u8; N];
    r.read_exact(&mut buf)?;
    Ok(buf)
}

fn read_f64s(r: &mut impl Read, n: usize) -> Result<Vec<f64>> {
    (0..n)
        .map(|_| read_array(r).map(f64::from_le_bytes))
        .collect()
}
