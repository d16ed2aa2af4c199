//! Synthetic mixtures of linear regressions and the two preprocessing
//! transforms that remove the bounded-input and symmetric-noise assumptions.

use nalgebra::Cholesky;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Cauchy, Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Batch, BatchPool, PoolKind, RegressionSample};
use crate::rng::{Seed, StreamRng};
use crate::{Matrix, Vector};

/// How responses are generated from inputs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResponseRule {
    /// `y = w·x + N(0, σ²)`.
    Linear,
    /// `y = ‖x‖²`.
    SquaredNorm,
    /// Standard Cauchy draw clamped to `±1e6`, independent of `x`.
    Cauchy,
}

pub const CAUCHY_CLAMP: f64 = 1e6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComponentSpec {
    /// Input covariance; `None` is the identity.
    #[serde(default)]
    pub covariance: Option<Matrix>,
    #[serde(default)]
    pub w: Option<Vector>,
    pub noise_sigma: f64,
    pub small_fraction: f64,
    pub medium_fraction: f64,
    pub response_rule: ResponseRule,
}

impl ComponentSpec {
    pub fn linear(w: Vector, noise_sigma: f64, fraction: f64) -> Self {
        Self {
            covariance: None,
            w: Some(w),
            noise_sigma,
            small_fraction: fraction,
            medium_fraction: fraction,
            response_rule: ResponseRule::Linear,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixtureSpec {
    pub d: usize,
    pub k: usize,
    pub components: Vec<ComponentSpec>,
    /// Indices of the heavy components.
    pub heavy_set: Vec<usize>,
}

impl MixtureSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if self.components.len() != self.k {
            return bad(format!("k = {} but {} components given", self.k, self.components.len()));
        }
        for (i, c) in self.components.iter().enumerate() {
            for f in [c.small_fraction, c.medium_fraction] {
                if !(0.0..=1.0).contains(&f) {
                    return bad(format!("component {i}: fraction {f} outside [0, 1]"));
                }
            }
            if !(c.noise_sigma >= 0.0) {
                return bad(format!("component {i}: negative noise"));
            }
            if let Some(cov) = &c.covariance {
                if cov.shape() != (self.d, self.d) {
                    return Err(Error::DimensionMismatch { expected: self.d, got: cov.nrows() });
                }
            }
            match (&c.w, c.response_rule) {
                (Some(w), _) if w.len() != self.d => return Err(Error::DimensionMismatch { expected: self.d, got: w.len() }),
                (None, ResponseRule::Linear) => return bad(format!("component {i}: linear rule needs w")),
                _ => {}
            }
        }
        if let Some(&i) = self.heavy_set.iter().find(|&&i| i >= self.k) {
            return bad(format!("heavy index {i} out of range"));
        }
        Ok(())
    }
}

/// `Q·diag(λ)·Qᵀ` with `Q` Haar-distributed and `λⱼ ~ U[1, C1]`.
///
/// `Q` comes from the QR factorization of a Gaussian matrix with the signs
/// of `R`'s diagonal moved into `Q`. `C1 = 1` returns the identity exactly.
pub fn random_covariance<R: Rng + ?Sized>(d: usize, c1: f64, rng: &mut R) -> Matrix {
    if c1 <= 1.0 {
        return Matrix::identity(d, d);
    }
    let g = Matrix::from_fn(d, d, |_, _| StandardNormal.sample(rng));
    let qr = g.qr();
    let mut q = qr.q();
    let r = qr.r();
    for j in 0..d {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    let lambda = Vector::from_fn(d, |_, _| rng.random_range(1.0..=c1));
    let m = &q * Matrix::from_diagonal(&lambda) * q.transpose();
    (&m + m.transpose()) * 0.5
}

/// Integer counts proportional to `weights` summing to `total`: floors
/// first, then the leftover units go to the largest remainders (ties to the
/// smaller index).
pub fn largest_remainder(weights: &[f64], total: usize) -> Result<Vec<usize>> {
    let sum: f64 = weights.iter().sum();
    if !(sum > 0.0) {
        return Err(Error::ZeroFractions);
    }
    let quotas: Vec<f64> = weights.iter().map(|w| w / sum * total as f64).collect();
    let mut counts: Vec<usize> = quotas.iter().map(|q| q.floor() as usize).collect();
    let assigned: usize = counts.iter().sum();
    let mut order: Vec<usize> = (0..weights.len()).collect();
    order.sort_by(|&a, &b| (quotas[b] - quotas[b].floor()).total_cmp(&(quotas[a] - quotas[a].floor())));
    for &i in order.iter().take(total.saturating_sub(assigned)) {
        counts[i] += 1;
    }
    Ok(counts)
}

/// Sampler for one component, with its covariance factor precomputed.
pub struct ComponentSampler<'a> {
    spec: &'a ComponentSpec,
    factor: Option<Matrix>,
    d: usize,
}

impl<'a> ComponentSampler<'a> {
    pub fn new(spec: &'a ComponentSpec, d: usize) -> Result<Self> {
        let factor = match &spec.covariance {
            None => None,
            Some(cov) => Some(
                Cholesky::new(cov.clone())
                    .ok_or_else(|| Error::InvalidConfig("covariance is not positive definite".into()))?
                    .l(),
            ),
        };
        Ok(Self { spec, factor, d })
    }

    pub fn sample(&self, rng: &mut StreamRng) -> RegressionSample {
        let z = Vector::from_fn(self.d, |_, _| StandardNormal.sample(rng));
        let x = match &self.factor {
            Some(l) => l * z,
            None => z,
        };
        let y = match self.spec.response_rule {
            ResponseRule::Linear => {
                let noise: f64 = StandardNormal.sample(rng);
                x.dot(self.spec.w.as_ref().expect("validated")) + self.spec.noise_sigma * noise
            }
            ResponseRule::SquaredNorm => x.norm_squared(),
            ResponseRule::Cauchy => {
                let c: f64 = Cauchy::new(0.0, 1.0).expect("valid scale").sample(rng);
                c.clamp(-CAUCHY_CLAMP, CAUCHY_CLAMP)
            }
        };
        RegressionSample::new(x, y)
    }

    pub fn batch(&self, id: usize, component: usize, size: usize, seed: Seed) -> Batch {
        let mut rng = seed.rng();
        Batch::with_truth(id, (0..size).map(|_| self.sample(&mut rng)).collect(), component)
    }
}

fn samplers(spec: &MixtureSpec) -> Result<Vec<ComponentSampler<'_>>> {
    spec.components.iter().map(|c| ComponentSampler::new(c, spec.d)).collect()
}

/// One pool of `n_batches` batches of `size` samples, with ids starting at
/// `first_id`. Component counts follow the pool's fractions by largest
/// remainder; the batch order is then shuffled. Batch `id` draws its samples
/// from `seed.child("batch", id)`.
pub fn gen_pool(spec: &MixtureSpec, kind: PoolKind, n_batches: usize, size: usize, first_id: usize, seed: Seed) -> Result<BatchPool> {
    spec.validate()?;
    let weights: Vec<f64> = spec
        .components
        .iter()
        .map(|c| match kind {
            PoolKind::Small => c.small_fraction,
            PoolKind::Medium => c.medium_fraction,
        })
        .collect();
    let counts = largest_remainder(&weights, n_batches)?;
    let mut labels: Vec<usize> = counts.iter().enumerate().flat_map(|(i, &n)| std::iter::repeat_n(i, n)).collect();
    labels.shuffle(&mut seed.child("order", 0).rng());
    let samplers = samplers(spec)?;
    let batches = labels
        .par_iter()
        .enumerate()
        .map(|(b, &comp)| {
            let id = first_id + b;
            samplers[comp].batch(id, comp, size, seed.child("batch", id as u64))
        })
        .collect();
    Ok(BatchPool::new(kind, batches))
}

/// Small pool with ids `0..n_small` and medium pool with ids following it.
pub fn gen_pools(
    spec: &MixtureSpec,
    n_small: usize,
    small_size: usize,
    n_medium: usize,
    medium_size: usize,
    seed: Seed,
) -> Result<(BatchPool, BatchPool)> {
    let small = gen_pool(spec, PoolKind::Small, n_small, small_size, 0, seed.child("small", 0))?;
    let medium = gen_pool(spec, PoolKind::Medium, n_medium, medium_size, n_small, seed.child("medium", 0))?;
    Ok((small, medium))
}

/// `n` batches from a single component, ids from `first_id`.
pub fn gen_component_batches(
    spec: &MixtureSpec,
    component: usize,
    n: usize,
    size: usize,
    first_id: usize,
    seed: Seed,
) -> Result<Vec<Batch>> {
    spec.validate()?;
    let c = spec.components.get(component).ok_or_else(|| Error::InvalidConfig(format!("no component {component}")))?;
    let sampler = ComponentSampler::new(c, spec.d)?;
    Ok((0..n)
        .into_par_iter()
        .map(|b| sampler.batch(first_id + b, component, size, seed.child("batch", (first_id + b) as u64)))
        .collect())
}

/// Drops samples with `‖x‖ > C2·√d`, then small batches left with fewer than
/// two samples and medium batches that lost more than 10% of their samples.
pub fn preprocess_norm_filter(pool: &BatchPool, c2: f64) -> BatchPool {
    let Some(d) = pool.dim() else {
        return pool.clone();
    };
    let bound = c2 * (d as f64).sqrt();
    let batches = pool
        .batches
        .iter()
        .filter_map(|b| {
            let kept: Vec<RegressionSample> = b.samples().iter().filter(|s| s.x.norm() <= bound).cloned().collect();
            let removed = b.len() - kept.len();
            let keep = match pool.kind {
                PoolKind::Small => kept.len() >= 2,
                PoolKind::Medium => removed * 10 <= b.len(),
            };
            match (keep, removed) {
                (false, _) => None,
                (true, 0) => Some(b.clone()),
                (true, _) => Some(b.replace_samples(kept)),
            }
        })
        .collect();
    BatchPool::new(pool.kind, batches)
}

/// Random pairing `((x₁ − x₂)/√2, (y₁ − y₂)/√2)`; an odd leftover is dropped.
pub fn symmetrize_pairs<R: Rng + ?Sized>(batch: &Batch, rng: &mut R) -> Result<Batch> {
    let s = batch.samples();
    if s.len() < 2 {
        return Err(Error::BatchTooShort { parts: 2, available: s.len() });
    }
    let mut idx: Vec<usize> = (0..s.len()).collect();
    idx.shuffle(rng);
    let h = std::f64::consts::FRAC_1_SQRT_2;
    let out = idx
        .chunks_exact(2)
        .map(|p| {
            let (a, b) = (&s[p[0]], &s[p[1]]);
            RegressionSample::new((&a.x - &b.x) * h, (a.y - b.y) * h)
        })
        .collect();
    Ok(batch.replace_samples(out))
}

pub fn symmetrize_pool(pool: &BatchPool, seed: Seed) -> Result<BatchPool> {
    let batches = pool
        .batches
        .par_iter()
        .map(|b| symmetrize_pairs(b, &mut seed.child("pairs", b.id as u64).rng()))
        .collect::<Result<_>>()?;
    Ok(BatchPool::new(pool.kind, batches))
}
