//! Experiment configuration, built-in presets and JSON loading.

use std::path::Path;

use batchmix::model::{AlgoConfig, ComponentCount, Constants};
use batchmix::synth::{random_covariance, ComponentSpec, MixtureSpec};
use batchmix::{Seed, Vector};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::HarnessError;

/// How the planted regression vectors are drawn.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "law", rename_all = "snake_case")]
pub enum WeightLaw {
    /// Entries i.i.d. `N(0, 1)`.
    Gaussian,
    /// First half of the components with entries `U[low, high]`, second half
    /// with entries `U[−high, −low]`.
    Bimodal { low: f64, high: f64 },
}

/// Random mixture family; the concrete spec is drawn per seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixtureRecipe {
    pub d: usize,
    pub k: usize,
    /// Components `0..heavy` form the heavy set.
    pub heavy: usize,
    /// Batch fraction of each heavy component; the rest is shared evenly.
    pub alpha: f64,
    pub weights: WeightLaw,
    /// Covariance eigenvalues are `U[1, c1]`; `1` gives identity covariances.
    pub c1: f64,
    pub noise_sigma: f64,
}

impl MixtureRecipe {
    pub fn build(&self, seed: Seed) -> Result<MixtureSpec, HarnessError> {
        if self.heavy == 0 || self.heavy > self.k {
            return Err(HarnessError::Config(format!("heavy = {} must lie in [1, k = {}]", self.heavy, self.k)));
        }
        let heavy_mass = self.heavy as f64 * self.alpha;
        if heavy_mass > 1.0 + 1e-12 {
            return Err(HarnessError::Config("heavy fractions exceed 1".into()));
        }
        let light = if self.k > self.heavy { (1.0 - heavy_mass).max(0.0) / (self.k - self.heavy) as f64 } else { 0.0 };
        let components = (0..self.k)
            .map(|i| {
                let mut rng = seed.child("component", i as u64).rng();
                let w = match self.weights {
                    WeightLaw::Gaussian => Vector::from_fn(self.d, |_, _| StandardNormal.sample(&mut rng)),
                    WeightLaw::Bimodal { low, high } => {
                        let sign = if i < self.k / 2 { 1.0 } else { -1.0 };
                        Vector::from_fn(self.d, |_, _| sign * rng.random_range(low..=high))
                    }
                };
                let covariance = (self.c1 > 1.0).then(|| random_covariance(self.d, self.c1, &mut rng));
                let fraction = if i < self.heavy { self.alpha } else { light };
                ComponentSpec { covariance, ..ComponentSpec::linear(w, self.noise_sigma, fraction) }
            })
            .collect();
        Ok(MixtureSpec { d: self.d, k: self.k, components, heavy_set: (0..self.heavy).collect() })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MixtureSource {
    Recipe(MixtureRecipe),
    Explicit(MixtureSpec),
}

impl MixtureSource {
    pub fn build(&self, seed: Seed) -> Result<MixtureSpec, HarnessError> {
        match self {
            MixtureSource::Recipe(r) => r.build(seed),
            MixtureSource::Explicit(spec) => Ok(spec.clone()),
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            MixtureSource::Recipe(r) => r.d,
            MixtureSource::Explicit(spec) => spec.d,
        }
    }
}

/// How list candidates are produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TargetMode {
    /// Draw target batches from the medium pool.
    Draws,
    /// One extra medium batch per heavy component serves as its target.
    ExtraPerHeavy,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    /// Label written to the CSV.
    pub preset: String,
    pub mixture: MixtureSource,
    pub algo: AlgoConfig,
    /// Replace `algo.M` by the largest planted heavy-vector norm.
    pub auto_m: bool,
    pub n_small_batches: usize,
    pub small_size: usize,
    pub n_medium_batches: usize,
    pub target_mode: TargetMode,
    /// Target draws; `None` uses the default draw count.
    pub draws: Option<usize>,
    pub n_new_batches: usize,
    pub new_batch_size: usize,
    pub eval_samples_per_batch: usize,
    /// Medium batch sizes `n_m`.
    pub sweep: Vec<usize>,
    pub seeds: Vec<u64>,
    /// Record wall-clock time in the CSV (breaks byte-identical output).
    pub timings: bool,
    pub output_path: String,
}

pub const PRESETS: [&str; 4] = ["fig1", "fig2", "fig3", "fig4"];

/// `min(8dk², 8d/α²)`
pub fn small_pool_size(d: usize, k: usize, alpha: f64) -> usize {
    let a = 8.0 * d as f64 * (k * k) as f64;
    let b = 8.0 * d as f64 / (alpha * alpha);
    a.min(b).round() as usize
}

/// Constants used by all presets. Fewer, larger filter parts and a
/// stricter threshold than the library defaults, which split medium batches
/// into parts too small to separate components.
pub fn preset_constants() -> Constants {
    Constants { c_r: 4.0, c_eps1: 0.5, c_eps2: 0.03, c_t1: 0.05, c_t2: 0.1, c_t3: 2.0, c_ell: 1.0 }
}

pub fn preset(name: &str) -> Option<ExperimentConfig> {
    let alpha = 1.0 / 16.0;
    let d = 100;
    let (k, heavy, weights, c1, target_mode) = match name {
        "fig1" => (16, 16, WeightLaw::Gaussian, 1.0, TargetMode::Draws),
        "fig2" => (16, 16, WeightLaw::Bimodal { low: 9.0, high: 11.0 }, 1.0, TargetMode::Draws),
        "fig3" => (16, 16, WeightLaw::Gaussian, 4.0, TargetMode::Draws),
        "fig4" => (100, 4, WeightLaw::Gaussian, 4.0, TargetMode::ExtraPerHeavy),
        _ => return None,
    };
    let recipe = MixtureRecipe { d, k, heavy, alpha, weights, c1, noise_sigma: 1.0 };
    let mut algo = AlgoConfig::new(d, ComponentCount::Finite(k), alpha, 1.0, c1, 1.0);
    algo.constants = preset_constants();
    algo.reuse_small = false;
    algo.reuse_medium = true;
    Some(ExperimentConfig {
        preset: name.to_string(),
        mixture: MixtureSource::Recipe(recipe),
        algo,
        auto_m: true,
        n_small_batches: small_pool_size(d, k, alpha),
        small_size: 2,
        n_medium_batches: 256,
        target_mode,
        draws: None,
        n_new_batches: 1600,
        new_batch_size: 4,
        eval_samples_per_batch: 200,
        sweep: vec![4, 8, 16, 32],
        seeds: (0..10).collect(),
        timings: false,
        output_path: format!("{name}.csv"),
    })
}

impl ExperimentConfig {
    /// Divides `d`, the medium pool and the new-batch count by `factor`; the
    /// small pool is recomputed from the reduced dimension. Explicit
    /// mixtures keep their dimension.
    pub fn scaled(mut self, factor: f64) -> Result<Self, HarnessError> {
        if !(factor >= 1.0) || !factor.is_finite() {
            return Err(HarnessError::Config(format!("scale must be >= 1, got {factor}")));
        }
        if factor == 1.0 {
            return Ok(self);
        }
        let shrink = |n: usize| ((n as f64 / factor).round() as usize).max(1);
        if let MixtureSource::Recipe(r) = &mut self.mixture {
            r.d = shrink(r.d);
            self.algo.d = r.d;
            self.n_small_batches = small_pool_size(r.d, r.k, r.alpha);
        }
        self.n_medium_batches = shrink(self.n_medium_batches);
        self.n_new_batches = shrink(self.n_new_batches);
        Ok(self)
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |m: &str| Err(HarnessError::Config(m.to_string()));
        if self.seeds.is_empty() {
            return bad("seeds must be nonempty");
        }
        if self.sweep.is_empty() || self.sweep.contains(&0) {
            return bad("sweep must list positive medium batch sizes");
        }
        if self.mixture.dim() != self.algo.d {
            return bad("algo.d differs from the mixture dimension");
        }
        if self.n_small_batches == 0 || self.n_medium_batches == 0 || self.small_size < 2 {
            return bad("pools must be nonempty with small batches of at least 2 samples");
        }
        if self.n_new_batches == 0 || self.new_batch_size == 0 || self.eval_samples_per_batch == 0 {
            return bad("evaluation sizes must be positive");
        }
        if self.draws == Some(0) {
            return bad("draws must be positive");
        }
        let mut algo = self.algo.clone();
        if self.auto_m {
            algo.m = 1.0;
        }
        algo.validate().map_err(|e| HarnessError::Config(e.to_string()))
    }

    /// Parses a JSON document. With a `"preset"` key naming a built-in
    /// preset, the remaining keys override the preset field by field
    /// (objects merge recursively).
    pub fn from_json(text: &str) -> Result<Self, HarnessError> {
        let doc: Value = serde_json::from_str(text).map_err(|e| HarnessError::Config(e.to_string()))?;
        let merged = match doc.get("preset").and_then(Value::as_str).and_then(preset) {
            Some(base) => {
                let mut base = serde_json::to_value(base).expect("config serializes");
                merge(&mut base, doc);
                base
            }
            None => doc,
        };
        let cfg: ExperimentConfig = serde_json::from_value(merged).map_err(|e| HarnessError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path).map_err(|e| HarnessError::Config(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }
}

fn merge(base: &mut Value, over: Value) {
    match (base, over) {
        (Value::Object(b), Value::Object(o)) => {
            for (key, v) in o {
                match b.get_mut(&key) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(key, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}
