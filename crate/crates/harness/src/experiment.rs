//! One experiment cell: generate pools, recover a list, evaluate it on fresh
//! batches from the heavy components.

use std::time::Instant;

use batchmix::model::{AlgoConfig, BatchPool, PoolKind};
use batchmix::recovery::{default_draws, estimate_single, recover_list, EstimateList};
use batchmix::selection::{empirical_mse, select_best_mse_index};
use batchmix::synth::{gen_component_batches, gen_pool, ComponentSampler, MixtureSpec};
use batchmix::{Seed, Vector};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{ExperimentConfig, TargetMode};
use crate::HarnessError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub preset: String,
    pub n_m: usize,
    pub new_batch_size: usize,
    pub seed: u64,
    pub avg_mse: f64,
    pub stderr: f64,
    pub list_size: usize,
    pub wall_ms: u64,
}

impl EvalRecord {
    pub fn failed(&self) -> bool {
        self.avg_mse.is_nan()
    }
}

/// Everything produced by one (seed, n_m) cell.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CellOutput {
    pub mixture: MixtureSpec,
    pub estimates: Vec<Vector>,
    pub provenance: Vec<usize>,
    pub record: EvalRecord,
}

/// Pools for one cell. Small batch ids come first, then medium, then the
/// extra target batches.
pub struct CellData {
    pub mixture: MixtureSpec,
    pub small: BatchPool,
    pub medium: BatchPool,
    pub algo: AlgoConfig,
}

pub fn cell_seed(seed: u64, n_m: usize) -> Seed {
    Seed::new(seed).child("cell", n_m as u64)
}

pub fn generate_cell(cfg: &ExperimentConfig, seed: u64, n_m: usize) -> Result<CellData, HarnessError> {
    // the mixture depends on the seed only, so the sweep compares like with like
    let mixture = cfg.mixture.build(Seed::new(seed).child("mixture", 0))?;
    let data_seed = cell_seed(seed, n_m);
    let small = gen_pool(&mixture, PoolKind::Small, cfg.n_small_batches, cfg.small_size, 0, data_seed.child("small", 0))?;
    let medium =
        gen_pool(&mixture, PoolKind::Medium, cfg.n_medium_batches, n_m, cfg.n_small_batches, data_seed.child("medium", 0))?;
    let mut algo = cfg.algo.clone();
    algo.rng_seed = seed;
    if cfg.auto_m {
        algo.m = mixture
            .heavy_set
            .iter()
            .filter_map(|&i| mixture.components[i].w.as_ref().map(|w| w.norm()))
            .fold(0.0, f64::max)
            .max(f64::MIN_POSITIVE);
    }
    Ok(CellData { mixture, small, medium, algo })
}

pub fn recover(cfg: &ExperimentConfig, data: &CellData, seed: u64, n_m: usize) -> Result<EstimateList, HarnessError> {
    let run_seed = cell_seed(seed, n_m).child("recover", 0);
    match cfg.target_mode {
        TargetMode::Draws => {
            let draws = cfg.draws.unwrap_or_else(|| default_draws(&data.algo));
            Ok(recover_list(&data.small, &data.medium, &data.algo, draws, run_seed)?)
        }
        TargetMode::ExtraPerHeavy => {
            let first_id = cfg.n_small_batches + cfg.n_medium_batches;
            let runs: Vec<_> = data
                .mixture
                .heavy_set
                .par_iter()
                .enumerate()
                .map(|(j, &comp)| {
                    let id = first_id + j;
                    let b = gen_component_batches(&data.mixture, comp, 1, n_m, id, cell_seed(seed, n_m).child("extra", 0))?
                        .remove(0);
                    let run = estimate_single(&b, &data.small, &data.medium, &data.algo, run_seed.child("target", j as u64));
                    Ok::<_, HarnessError>((id, run))
                })
                .collect::<Result<_, _>>()?;
            let mut list = EstimateList { estimates: Vec::new(), provenance: Vec::new(), failures: Vec::new() };
            for (j, (id, run)) in runs.into_iter().enumerate() {
                match run {
                    Ok(r) => {
                        list.estimates.push(r.w);
                        list.provenance.push(id);
                    }
                    Err(e) => list.failures.push((j, e)),
                }
            }
            if list.is_empty() {
                return Err(batchmix::Error::NoEstimates.into());
            }
            Ok(list)
        }
    }
}

/// Mean and standard error of the held-out MSE over `n_new_batches` fresh
/// batches: each batch picks the candidate with the lowest MSE on its own
/// samples, which is then scored on new samples from the same component.
pub fn evaluate(cfg: &ExperimentConfig, mixture: &MixtureSpec, list: &[Vector], seed: Seed) -> Result<(f64, f64), HarnessError> {
    let samplers: Vec<ComponentSampler> =
        mixture.components.iter().map(|c| ComponentSampler::new(c, mixture.d)).collect::<Result<_, _>>()?;
    let heavy = &mixture.heavy_set;
    if heavy.is_empty() {
        return Err(HarnessError::Config("mixture has no heavy components".into()));
    }
    let errors: Vec<f64> = (0..cfg.n_new_batches)
        .into_par_iter()
        .map(|b| {
            let mut rng = seed.child("new", b as u64).rng();
            let comp = heavy[rng.random_range(0..heavy.len())];
            let s = &samplers[comp];
            let fit: Vec<_> = (0..cfg.new_batch_size).map(|_| s.sample(&mut rng)).collect();
            let held: Vec<_> = (0..cfg.eval_samples_per_batch).map(|_| s.sample(&mut rng)).collect();
            let i = select_best_mse_index(&fit, list)?;
            Ok(empirical_mse(&held, &list[i]))
        })
        .collect::<Result<_, batchmix::Error>>()?;
    Ok(mean_and_se(&errors))
}

/// Sample mean and standard error (`s/√n`, zero for a single value).
pub fn mean_and_se(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

pub fn run_cell(cfg: &ExperimentConfig, seed: u64, n_m: usize) -> Result<CellOutput, HarnessError> {
    let start = Instant::now();
    let data = generate_cell(cfg, seed, n_m)?;
    let list = recover(cfg, &data, seed, n_m)?;
    for (draw, err) in &list.failures {
        log::info!("seed {seed} n_m {n_m}: draw {draw} failed: {err}");
    }
    let (avg_mse, stderr) = evaluate(cfg, &data.mixture, &list.estimates, cell_seed(seed, n_m).child("eval", 0))?;
    let wall_ms = if cfg.timings { start.elapsed().as_millis() as u64 } else { 0 };
    let record = EvalRecord {
        preset: cfg.preset.clone(),
        n_m,
        new_batch_size: cfg.new_batch_size,
        seed,
        avg_mse,
        stderr,
        list_size: list.len(),
        wall_ms,
    };
    Ok(CellOutput { mixture: data.mixture, estimates: list.estimates, provenance: list.provenance, record })
}

fn failure_row(cfg: &ExperimentConfig, seed: u64, n_m: usize) -> EvalRecord {
    EvalRecord {
        preset: cfg.preset.clone(),
        n_m,
        new_batch_size: cfg.new_batch_size,
        seed,
        avg_mse: f64::NAN,
        stderr: f64::NAN,
        list_size: 0,
        wall_ms: 0,
    }
}

/// Runs every (seed, n_m) cell in parallel. Failed cells become rows with
/// NaN MSE; records are ordered by n_m, then seed.
pub fn run_experiment(cfg: &ExperimentConfig) -> Vec<EvalRecord> {
    run_cells(cfg).into_iter().map(|(_, r)| r).collect()
}

/// Like [`run_experiment`] but also returns each cell's output on success.
pub fn run_cells(cfg: &ExperimentConfig) -> Vec<(Option<CellOutput>, EvalRecord)> {
    let cells: Vec<(usize, u64)> = cfg.sweep.iter().flat_map(|&n| cfg.seeds.iter().map(move |&s| (n, s))).collect();
    cells
        .par_iter()
        .map(|&(n_m, seed)| match run_cell(cfg, seed, n_m) {
            Ok(out) => {
                let rec = out.record.clone();
                (Some(out), rec)
            }
            Err(e) => {
                log::warn!("cell seed {seed} n_m {n_m} failed: {e}");
                (None, failure_row(cfg, seed, n_m))
            }
        })
        .collect()
}

/// Mean over seeds and its standard error, per n_m, ignoring failed cells.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub preset: String,
    pub n_m: usize,
    pub new_batch_size: usize,
    pub runs: usize,
    pub mean_mse: f64,
    pub stderr: f64,
}

pub fn summarize(records: &[EvalRecord]) -> Vec<SummaryRow> {
    let mut sizes: Vec<usize> = records.iter().map(|r| r.n_m).collect();
    sizes.sort_unstable();
    sizes.dedup();
    sizes
        .into_iter()
        .filter_map(|n_m| {
            let rows: Vec<&EvalRecord> = records.iter().filter(|r| r.n_m == n_m).collect();
            let vals: Vec<f64> = rows.iter().filter(|r| !r.failed()).map(|r| r.avg_mse).collect();
            let first = rows.first()?;
            let (mean_mse, stderr) = if vals.is_empty() { (f64::NAN, f64::NAN) } else { mean_and_se(&vals) };
            Some(SummaryRow {
                preset: first.preset.clone(),
                n_m,
                new_batch_size: first.new_batch_size,
                runs: vals.len(),
                mean_mse,
                stderr,
            })
        })
        .collect()
}
