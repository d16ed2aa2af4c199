//! Domain types and the random partitioning utilities used by the driver.

use std::fmt;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::Vector;

/// One input/output pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionSample {
    pub x: Vector,
    pub y: f64,
}

impl RegressionSample {
    pub fn new(x: Vector, y: f64) -> Self {
        Self { x, y }
    }

    pub fn dim(&self) -> usize {
        self.x.len()
    }

    /// `x·w − y`
    #[inline]
    pub fn residual(&self, w: &Vector) -> f64 {
        self.x.dot(w) - self.y
    }

    pub fn is_finite(&self) -> bool {
        self.y.is_finite() && self.x.iter().all(|v| v.is_finite())
    }
}

static TRUTH_READS: AtomicUsize = AtomicUsize::new(0);

/// Number of times any batch's ground-truth tag has been read in this process.
pub fn truth_reads() -> usize {
    TRUTH_READS.load(Ordering::SeqCst)
}

/// Samples from a single hidden component.
///
/// `id` is a stable identifier used to key per-batch random streams, so the
/// position of a batch inside a pool never influences the randomness it sees.
/// The generating component is kept private and every read is counted; the
/// estimators never call [`Batch::truth_component`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Batch {
    pub id: usize,
    samples: Arc<[RegressionSample]>,
    #[serde(rename = "truth_component")]
    truth: Option<usize>,
}

impl Batch {
    pub fn new(id: usize, samples: Vec<RegressionSample>) -> Self {
        Self { id, samples: samples.into(), truth: None }
    }

    pub fn with_truth(id: usize, samples: Vec<RegressionSample>, component: usize) -> Self {
        Self { id, samples: samples.into(), truth: Some(component) }
    }

    pub fn samples(&self) -> &[RegressionSample] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn dim(&self) -> Option<usize> {
        self.samples.first().map(RegressionSample::dim)
    }

    /// Evaluation-only ground truth.
    pub fn truth_component(&self) -> Option<usize> {
        TRUTH_READS.fetch_add(1, Ordering::SeqCst);
        self.truth
    }

    /// Same batch with a different sample list (truth tag and id kept).
    pub fn replace_samples(&self, samples: Vec<RegressionSample>) -> Self {
        Self { id: self.id, samples: samples.into(), truth: self.truth }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PoolKind {
    Small,
    Medium,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchPool {
    pub batches: Vec<Batch>,
    pub kind: PoolKind,
}

impl BatchPool {
    pub fn new(kind: PoolKind, batches: Vec<Batch>) -> Self {
        Self { batches, kind }
    }

    pub fn len(&self) -> usize {
        self.batches.len()
    }

    pub fn is_empty(&self) -> bool {
        self.batches.is_empty()
    }

    pub fn dim(&self) -> Option<usize> {
        self.batches.iter().find_map(Batch::dim)
    }

    pub fn sample_count(&self) -> usize {
        self.batches.iter().map(Batch::len).sum()
    }

    /// Checks the size invariant of the pool kind (`min_medium` is `n_m`).
    pub fn check_sizes(&self, min_medium: usize) -> Result<()> {
        let min = match self.kind {
            PoolKind::Small => 2,
            PoolKind::Medium => min_medium,
        };
        match self.batches.iter().find(|b| b.len() < min) {
            Some(b) => Err(Error::BatchTooShort { parts: min, available: b.len() }),
            None => Ok(()),
        }
    }

    pub fn without(&self, id: usize) -> BatchPool {
        BatchPool::new(self.kind, self.batches.iter().filter(|b| b.id != id).cloned().collect())
    }
}

/// Number of mixture components, possibly unbounded.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ComponentCount {
    Finite(usize),
    Unbounded,
}

impl ComponentCount {
    pub fn finite(self) -> Option<usize> {
        match self {
            ComponentCount::Finite(k) => Some(k),
            ComponentCount::Unbounded => None,
        }
    }
}

impl fmt::Display for ComponentCount {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ComponentCount::Finite(k) => write!(f, "{k}"),
            ComponentCount::Unbounded => f.write_str("unbounded"),
        }
    }
}

impl Serialize for ComponentCount {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            ComponentCount::Finite(k) => s.serialize_u64(*k as u64),
            ComponentCount::Unbounded => s.serialize_str("unbounded"),
        }
    }
}

impl<'de> Deserialize<'de> for ComponentCount {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(usize),
            Text(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(k) => Ok(ComponentCount::Finite(k)),
            Raw::Text(t) if t == "unbounded" => Ok(ComponentCount::Unbounded),
            Raw::Text(t) => Err(serde::de::Error::custom(format!("expected integer or \"unbounded\", got {t:?}"))),
        }
    }
}

/// Explicit values for the constants hidden in the asymptotic parameter choices.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Constants {
    /// Round count multiplier: `R = ceil(c_r · C1 · ln(max(M/σ, 2)))`.
    pub c_r: f64,
    /// `ε1 = c_eps1`.
    pub c_eps1: f64,
    /// `ε2 = c_eps2 · (ε + 1/√C1) / (C1 · √(C+1))`.
    pub c_eps2: f64,
    /// `T1 = ceil(c_t1 · ln(|B̂|/δ'))` test repetitions in gradient estimation.
    pub c_t1: f64,
    /// `T2 = ceil(c_t2 · ln(1/δ'))` median-of-means groups.
    pub c_t2: f64,
    /// Part count for clip estimation and selection, `ceil(c_t3 · ln(·/δ'))`.
    pub c_t3: f64,
    /// `ℓ = min(k, ceil(c_ell / (2 α_s ε2²)))`.
    pub c_ell: f64,
}

impl Default for Constants {
    fn default() -> Self {
        Self { c_r: 4.0, c_eps1: 0.5, c_eps2: 0.05, c_t1: 2.0, c_t2: 2.0, c_t3: 2.0, c_ell: 1.0 }
    }
}

/// All algorithm knobs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlgoConfig {
    pub d: usize,
    pub k: ComponentCount,
    pub alpha_s: f64,
    pub alpha_m: f64,
    /// Upper bound on the noise scale.
    pub sigma: f64,
    /// L4-L2 hypercontractivity constant.
    #[serde(rename = "C")]
    pub c: f64,
    /// Bound on the spectral norm of every input covariance.
    #[serde(rename = "C1")]
    pub c1: f64,
    /// Inputs satisfy `‖x‖ ≤ C2·√d` after preprocessing.
    #[serde(rename = "C2")]
    pub c2: f64,
    /// Upper bound on the norm of the target regression vector.
    #[serde(rename = "M")]
    pub m: f64,
    pub eps: f64,
    pub delta: f64,
    #[serde(default)]
    pub constants: Constants,
    #[serde(default)]
    pub rng_seed: u64,
    /// Use the whole small-batch pool in every round instead of a fresh
    /// `1/R` share.
    #[serde(default)]
    pub reuse_small: bool,
    /// Use the whole medium pool (and a fresh half-split of the target batch)
    /// in every round instead of disjoint per-round shares.
    #[serde(default)]
    pub reuse_medium: bool,
}

impl AlgoConfig {
    /// Config with the default constants and strict per-round data splitting.
    pub fn new(d: usize, k: ComponentCount, alpha: f64, sigma: f64, c1: f64, m: f64) -> Self {
        Self {
            d,
            k,
            alpha_s: alpha,
            alpha_m: alpha,
            sigma,
            c: 3.0,
            c1,
            c2: 3.0,
            m,
            eps: 0.5,
            delta: 0.1,
            constants: Constants::default(),
            rng_seed: 0,
            reuse_small: false,
            reuse_medium: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidConfig(msg.to_string()));
        let in_unit = |v: f64| v > 0.0 && v <= 1.0;
        if self.d == 0 {
            return bad("d must be positive");
        }
        if self.k == ComponentCount::Finite(0) {
            return bad("k must be positive");
        }
        if !in_unit(self.alpha_s) || !in_unit(self.alpha_m) {
            return bad("alpha_s and alpha_m must lie in (0, 1]");
        }
        if !(self.sigma >= 0.0) || !self.sigma.is_finite() {
            return bad("sigma must be a finite value >= 0");
        }
        if !(self.c >= 1.0) || !(self.c1 >= 1.0) {
            return bad("C and C1 must be >= 1");
        }
        if !(self.c2 > 0.0) {
            return bad("C2 must be positive");
        }
        if !(self.m > 0.0) || !self.m.is_finite() {
            return bad("M must be positive and finite");
        }
        if !in_unit(self.eps) || !in_unit(self.delta) {
            return bad("eps and delta must lie in (0, 1]");
        }
        let k = &self.constants;
        if [k.c_r, k.c_eps1, k.c_eps2, k.c_t1, k.c_t2, k.c_t3, k.c_ell].iter().any(|v| !(*v > 0.0) || !v.is_finite()) {
            return bad("all constants must be positive and finite");
        }
        if self.eps1() > 1.0 {
            return bad("eps1 = c_eps1 must lie in (0, 1]");
        }
        Ok(())
    }

    /// σ with the zero case replaced by `1e-8·M`.
    pub fn sigma_eff(&self) -> f64 {
        if self.sigma > 0.0 {
            self.sigma
        } else {
            1e-8 * self.m
        }
    }

    /// Number of descent rounds before any data-driven reduction.
    pub fn rounds(&self) -> usize {
        let ratio = (self.m / self.sigma_eff()).max(2.0);
        ((self.constants.c_r * self.c1 * ratio.ln()).ceil() as usize).max(1)
    }

    pub fn eps1(&self) -> f64 {
        self.constants.c_eps1
    }

    pub fn eps2(&self) -> f64 {
        self.constants.c_eps2 * (self.eps + 1.0 / self.c1.sqrt()) / (self.c1 * (self.c + 1.0).sqrt())
    }

    /// Subspace rank, capped at `d`.
    pub fn ell(&self) -> usize {
        let e2 = self.eps2();
        let spectral = (self.constants.c_ell / (2.0 * self.alpha_s * e2 * e2)).ceil();
        let spectral = if spectral.is_finite() && spectral < usize::MAX as f64 { spectral as usize } else { usize::MAX };
        let ell = match self.k {
            ComponentCount::Finite(k) => k.min(spectral),
            ComponentCount::Unbounded => spectral,
        };
        ell.clamp(1, self.d)
    }

    /// Per-subroutine failure probability `δ/(5R)`.
    pub fn delta_prime(&self, rounds: usize) -> f64 {
        self.delta / (5.0 * rounds.max(1) as f64)
    }

    pub fn clip_parts(&self, delta_p: f64) -> usize {
        ceil_log(self.constants.c_t3, 1.0 / delta_p)
    }

    pub fn test_repetitions(&self, pool_len: usize, delta_p: f64) -> usize {
        ceil_log(self.constants.c_t1, pool_len.max(1) as f64 / delta_p)
    }

    pub fn estimation_groups(&self, delta_p: f64) -> usize {
        ceil_log(self.constants.c_t2, 1.0 / delta_p)
    }
}

/// `max(1, ceil(c · ln(arg)))`
pub(crate) fn ceil_log(c: f64, arg: f64) -> usize {
    let v = (c * arg.max(1.0).ln()).ceil();
    if v.is_finite() && v >= 1.0 {
        v as usize
    } else {
        1
    }
}

/// Current iterate and clipping scale.
#[derive(Debug, Clone, PartialEq)]
pub struct GradContext {
    pub w: Vector,
    pub kappa: f64,
}

impl GradContext {
    pub fn new(w: Vector, kappa: f64) -> Self {
        debug_assert!(kappa > 0.0, "clipping scale must be positive");
        Self { w, kappa }
    }

    /// Context without clipping (`κ = +∞`).
    pub fn unclipped(w: Vector) -> Self {
        Self { w, kappa: f64::INFINITY }
    }
}

/// Splits `0..n` into `parts` disjoint index lists by a uniform random
/// permutation. Sizes differ by at most one; earlier parts get the extras.
pub fn split_indices<R: Rng + ?Sized>(n: usize, parts: usize, rng: &mut R) -> Vec<Vec<usize>> {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(rng);
    chunk_even(&idx, parts)
}

pub(crate) fn chunk_even(items: &[usize], parts: usize) -> Vec<Vec<usize>> {
    let n = items.len();
    let base = n / parts;
    let extra = n % parts;
    let mut out = Vec::with_capacity(parts);
    let mut start = 0;
    for p in 0..parts {
        let len = base + usize::from(p < extra);
        out.push(items[start..start + len].to_vec());
        start += len;
    }
    out
}

/// Random partition of a pool into `parts` pools of near-equal size.
pub fn partition_batches<R: Rng + ?Sized>(pool: &BatchPool, parts: usize, rng: &mut R) -> Result<Vec<BatchPool>> {
    if parts == 0 || pool.is_empty() {
        return Err(Error::EmptyPool);
    }
    if parts > pool.len() {
        return Err(Error::TooFewBatches { parts, available: pool.len() });
    }
    Ok(split_indices(pool.len(), parts, rng)
        .into_iter()
        .map(|ix| BatchPool::new(pool.kind, ix.into_iter().map(|i| pool.batches[i].clone()).collect()))
        .collect())
}

/// Random split of a sample list into `parts` disjoint lists of near-equal size.
pub fn split_samples<R: Rng + ?Sized>(
    samples: &[RegressionSample],
    parts: usize,
    rng: &mut R,
) -> Result<Vec<Vec<RegressionSample>>> {
    Ok(split_sample_refs(samples, parts, rng)?
        .into_iter()
        .map(|part| part.into_iter().cloned().collect())
        .collect())
}

/// Borrowing variant of [`split_samples`].
pub fn split_sample_refs<'a, R: Rng + ?Sized>(
    samples: &'a [RegressionSample],
    parts: usize,
    rng: &mut R,
) -> Result<Vec<Vec<&'a RegressionSample>>> {
    if parts == 0 || parts > samples.len() {
        return Err(Error::BatchTooShort { parts, available: samples.len() });
    }
    Ok(split_indices(samples.len(), parts, rng)
        .into_iter()
        .map(|ix| ix.into_iter().map(|i| &samples[i]).collect())
        .collect())
}
