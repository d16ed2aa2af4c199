//! Property checks shared by the CLI selftest and the acceptance suite.
//!
//! Each check builds its own planted instances, compares the library against
//! an independent computation and reports a single pass/fail line.

use std::fmt;
use std::time::Instant;

use batchmix::clip::{clip_grad_sample, clip_grad_set, clipped_residual};
use batchmix::grad_est::{grad_est, select_central, GradEstParams};
use batchmix::model::{Batch, BatchPool, GradContext, PoolKind, RegressionSample};
use batchmix::selection::{select_tournament_index, tournament_parts, TournamentParams};
use batchmix::subspace::{subspace_residual_bound, top_subspace, Projection};
use batchmix::{Matrix, Seed, Vector};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::config::{preset, ExperimentConfig, MixtureSource};
use crate::experiment::{run_cells, run_experiment, summarize, EvalRecord};
use crate::report::write_records;
use crate::HarnessError;

#[derive(Debug, Clone)]
pub struct CheckResult {
    pub id: u32,
    pub name: &'static str,
    pub pass: bool,
    pub detail: String,
    pub secs: f64,
}

impl fmt::Display for CheckResult {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let verdict = if self.pass { "PASS" } else { "FAIL" };
        write!(f, "criterion {:>2} {verdict} {} ({:.1}s): {}", self.id, self.name, self.secs, self.detail)
    }
}

fn timed(id: u32, name: &'static str, body: impl FnOnce() -> (bool, String)) -> CheckResult {
    let start = Instant::now();
    let (pass, detail) = body();
    CheckResult { id, name, pass, detail, secs: start.elapsed().as_secs_f64() }
}

fn gaussian_vec<R: Rng>(d: usize, rng: &mut R) -> Vector {
    Vector::from_fn(d, |_, _| StandardNormal.sample(rng))
}

fn linear_sample<R: Rng>(w: &Vector, sigma: f64, rng: &mut R) -> RegressionSample {
    let x = gaussian_vec(w.len(), rng);
    let noise: f64 = StandardNormal.sample(rng);
    let y = x.dot(w) + sigma * noise;
    RegressionSample::new(x, y)
}

/// Criterion 1: norm bound, identity below the cap, and the unclipped path
/// against a plain-slice implementation, over 10⁵ random instances.
pub fn clip_calculus() -> CheckResult {
    timed(1, "clip calculus", || {
        let mut rng = Seed::new(101).rng();
        let (mut bound_viol, mut ident_viol, mut max_dev) = (0usize, 0usize, 0f64);
        let n = 100_000;
        for _ in 0..n {
            let d = rng.random_range(1..=8);
            let x: Vec<f64> = (0..d).map(|_| rng.random_range(-10.0..10.0)).collect();
            let w: Vec<f64> = (0..d).map(|_| rng.random_range(-10.0..10.0)).collect();
            let y = rng.random_range(-100.0..100.0);
            let kappa = 10f64.powf(rng.random_range(-3.0..3.0));
            let s = RegressionSample::new(Vector::from_vec(x.clone()), y);
            let ctx = GradContext::new(Vector::from_vec(w.clone()), kappa);
            let clipped = clip_grad_sample(&s, &ctx);
            let xn = x.iter().map(|v| v * v).sum::<f64>().sqrt();
            if clipped.norm() > kappa * xn * (1.0 + 1e-12) {
                bound_viol += 1;
            }
            let r: f64 = x.iter().zip(&w).map(|(a, b)| a * b).sum::<f64>() - y;
            if r.abs() <= kappa && clipped != &s.x * s.residual(&ctx.w) {
                ident_viol += 1;
            }
            let raw = clip_grad_sample(&s, &GradContext::unclipped(ctx.w.clone()));
            for j in 0..d {
                max_dev = max_dev.max((raw[j] - r * x[j]).abs() / (1.0 + (r * x[j]).abs()));
            }
        }
        // set means on the unclipped path against plain loops
        for _ in 0..2000 {
            let d = rng.random_range(1..=8);
            let m = rng.random_range(1..=64);
            let w: Vec<f64> = (0..d).map(|_| rng.random_range(-5.0..5.0)).collect();
            let rows: Vec<(Vec<f64>, f64)> = (0..m)
                .map(|_| ((0..d).map(|_| rng.random_range(-5.0..5.0)).collect(), rng.random_range(-20.0..20.0)))
                .collect();
            let samples: Vec<RegressionSample> =
                rows.iter().map(|(x, y)| RegressionSample::new(Vector::from_vec(x.clone()), *y)).collect();
            let got = clip_grad_set(&samples, &GradContext::unclipped(Vector::from_vec(w.clone()))).expect("nonempty").0;
            for j in 0..d {
                let mut acc = 0.0;
                for (x, y) in &rows {
                    let r: f64 = x.iter().zip(&w).map(|(a, b)| a * b).sum::<f64>() - y;
                    acc += r * x[j];
                }
                let want = acc / m as f64;
                max_dev = max_dev.max((got[j] - want).abs() / (1.0 + want.abs()));
            }
        }
        let pass = bound_viol == 0 && ident_viol == 0 && max_dev <= 1e-12;
        (pass, format!("{n} instances, bound violations {bound_viol}, identity violations {ident_viol}, max relative deviation {max_dev:.2e}"))
    })
}

/// Criterion 2: bias of the clipped gradient at the smallest admissible κ.
pub fn clip_bias() -> CheckResult {
    timed(2, "clip bias", || {
        let (d, eps, sigma, c, c1): (usize, f64, f64, f64, f64) = (10, 0.5, 1.0, 3.0, 1.0);
        let mut rng = Seed::new(202).rng();
        let w0 = gaussian_vec(d, &mut rng);
        let mut u = gaussian_vec(d, &mut rng);
        u /= u.norm();
        let w = &w0 + &u; // ‖w − w0‖ = 1
        let mean_sq_res = 1.0 + sigma * sigma;
        let kappa = (8.0 * c * c1 * mean_sq_res / eps).sqrt();
        let n = 100_000;
        let mut sum = Vector::zeros(d);
        let mut sum_sq = 0.0;
        for _ in 0..n {
            let s = linear_sample(&w0, sigma, &mut rng);
            let r = s.residual(&w);
            let diff = &s.x * (clipped_residual(r, kappa) - r);
            sum_sq += diff.norm_squared();
            sum += diff;
        }
        let mean = &sum / n as f64;
        let var_trace = (sum_sq / n as f64 - mean.norm_squared()).max(0.0);
        let se = (var_trace / n as f64).sqrt();
        let bound = eps * 1.0;
        let pass = mean.norm() <= bound + 3.0 * se;
        (pass, format!("κ = {kappa:.3}, ‖mean difference‖ = {:.3e} vs ε‖w−w0‖ = {bound} (+3SE = {:.3e})", mean.norm(), 3.0 * se))
    })
}

/// Criterion 3: the subspace residual inequality on 1000 small instances.
pub fn subspace_lemma() -> CheckResult {
    timed(3, "subspace perturbation bound", || {
        let mut rng = Seed::new(303).rng();
        let mut worst = f64::NEG_INFINITY;
        let mut violations = 0;
        let trials = 1000;
        for _ in 0..trials {
            let d = rng.random_range(1..=8);
            let k = rng.random_range(1..=5);
            let ell = rng.random_range(1..=6usize.min(d));
            let z: Vec<Vector> = (0..k).map(|_| gaussian_vec(d, &mut rng) * rng.random_range(0.1..3.0)).collect();
            let raw: Vec<f64> = (0..k).map(|_| rng.random_range(0.05..1.0)).collect();
            let total: f64 = raw.iter().sum();
            let p: Vec<f64> = raw.iter().map(|v| v / total).collect();
            let mut m = Matrix::zeros(d, d);
            for (zi, &pi) in z.iter().zip(&p) {
                m.ger(pi, zi, zi, 1.0);
            }
            let noise_scale = 10f64.powf(rng.random_range(-3.0..0.5));
            let e = Matrix::from_fn(d, d, |_, _| StandardNormal.sample(&mut rng)) * noise_scale;
            m += (&e + e.transpose()) * 0.5;
            let Ok(est) = top_subspace(&m, ell) else { continue };
            let proj = est.projection;
            let resid = (&z[0] - proj.apply(&z[0])).norm_squared();
            let bound = subspace_residual_bound(&z, &p, &m, ell).expect("valid instance");
            worst = worst.max(resid - bound);
            if resid > bound + 1e-9 {
                violations += 1;
            }
        }
        (violations == 0, format!("{trials} instances, violations {violations}, max(residual − bound) = {worst:.3e}"))
    })
}

/// Planted two-component filter instance; returns (target kept, target
/// total, far rejected, far total) for one seed.
pub fn filter_trial(seed: u64) -> (usize, usize, usize, usize) {
    let (d, ell, eps, kappa, c1) = (10usize, 4usize, 0.25, 3.0, 1.0);
    let mut rng = Seed::new(seed).child("filter", 0).rng();
    let w0 = gaussian_vec(d, &mut rng);
    let mut w1 = w0.clone();
    w1[0] += 10.0;
    let n_batches = 20;
    let delta_p: f64 = 0.01;
    let t1 = ((n_batches as f64 / delta_p).ln()).ceil() as usize;
    let part = ((ell as f64).sqrt() / (eps * eps)).ceil() as usize;
    let size = 4 * t1 * part;
    let batches: Vec<Batch> = (0..n_batches)
        .map(|b| {
            let w = if b % 2 == 0 { &w0 } else { &w1 };
            Batch::with_truth(b, (0..size).map(|_| linear_sample(w, 1.0, &mut rng)).collect(), b % 2)
        })
        .collect();
    let pool = BatchPool::new(PoolKind::Medium, batches);
    let star: Vec<RegressionSample> = (0..2 * t1 * part).map(|_| linear_sample(&w0, 1.0, &mut rng)).collect();
    let ctx = GradContext::new(w0.clone(), kappa);
    let proj = Projection::coordinate(d, ell);
    let params = GradEstParams { eps, c1, test_reps: t1, groups: 1 };
    match grad_est(&pool, &star, &ctx, &proj, &params, Seed::new(seed).child("grad", 0)) {
        Ok(out) => {
            let kept_target = out.report.kept.iter().filter(|&&id| id % 2 == 0).count();
            let kept_far = out.report.kept.iter().filter(|&&id| id % 2 == 1).count();
            (kept_target, n_batches / 2, n_batches / 2 - kept_far, n_batches / 2)
        }
        Err(_) => (0, n_batches / 2, n_batches / 2, n_batches / 2),
    }
}

/// Monte-Carlo projected clipped-gradient gap of the planted far component.
pub fn filter_gap() -> f64 {
    let mut rng = Seed::new(404).rng();
    let d = 10;
    let w0 = gaussian_vec(d, &mut rng);
    let mut w1 = w0.clone();
    w1[0] += 10.0;
    let ctx = GradContext::new(w0.clone(), 3.0);
    let proj = Projection::coordinate(d, 4);
    let n = 200_000;
    let s0: Vec<RegressionSample> = (0..n).map(|_| linear_sample(&w0, 1.0, &mut rng)).collect();
    let s1: Vec<RegressionSample> = (0..n).map(|_| linear_sample(&w1, 1.0, &mut rng)).collect();
    let g0 = proj.apply(&clip_grad_set(&s0, &ctx).expect("nonempty").0);
    let g1 = proj.apply(&clip_grad_set(&s1, &ctx).expect("nonempty").0);
    (g1 - g0).norm()
}

/// Criterion 4: retention of target batches and rejection of far ones.
pub fn filter_characteristics() -> CheckResult {
    timed(4, "filter operating characteristics", || {
        let gap = filter_gap();
        let required = 2.0 * 0.25 * 3.0;
        let (mut kt, mut nt, mut rf, mut nf) = (0, 0, 0, 0);
        for seed in 0..50 {
            let (a, b, c, d) = filter_trial(seed);
            kt += a;
            nt += b;
            rf += c;
            nf += d;
        }
        let retention = kt as f64 / nt as f64;
        let rejection = rf as f64 / nf as f64;
        let pass = gap > required && retention >= 0.95 && rejection >= 0.95;
        (pass, format!("gap {gap:.3} > 2εκ√C1 = {required}; retention {retention:.3}, rejection {rejection:.3} over 50 seeds"))
    })
}

/// Independent argmin of the lower-median distance, from a full distance table.
pub fn brute_force_central(points: &[Vector]) -> usize {
    let n = points.len();
    let table: Vec<Vec<f64>> = (0..n).map(|i| (0..n).map(|j| (&points[i] - &points[j]).norm()).collect()).collect();
    let mut xi = vec![0.0; n];
    for i in 0..n {
        let mut others: Vec<f64> = (0..n).filter(|&j| j != i).map(|j| table[i][j]).collect();
        others.sort_by(f64::total_cmp);
        xi[i] = if others.is_empty() { 0.0 } else { others[(others.len() + 1) / 2 - 1] };
    }
    let mut best = 0;
    for i in 1..n {
        if xi[i] < xi[best] {
            best = i;
        }
    }
    best
}

/// Criterion 5: group selection against the brute-force table.
pub fn selection_oracle() -> CheckResult {
    timed(5, "median-of-means selection oracle", || {
        let mut rng = Seed::new(505).rng();
        let mut mismatches = 0;
        let mut total = 0;
        for t2 in 1..=6 {
            for trial in 0..1000 {
                let dim = rng.random_range(1..=4);
                let pts: Vec<Vector> = (0..t2)
                    .map(|_| {
                        if trial % 3 == 0 {
                            // small integer grid: frequent exact ties
                            Vector::from_fn(dim, |_, _| rng.random_range(-2..=2) as f64)
                        } else {
                            gaussian_vec(dim, &mut rng) * 10f64.powf(rng.random_range(-2.0..2.0))
                        }
                    })
                    .collect();
                total += 1;
                if select_central(&pts) != Some(brute_force_central(&pts)) {
                    mismatches += 1;
                }
            }
        }
        (mismatches == 0, format!("{total} instances for T2 in 1..=6, mismatches {mismatches}"))
    })
}

/// Criterion 9: the tournament returns a β-good entry among far decoys.
pub fn tournament() -> CheckResult {
    timed(9, "selection tournament", || {
        let (d, sigma, c1, delta) = (10, 1.0, 1.0, 0.1);
        let beta = 0.1 * sigma;
        let seeds = 50;
        let (mut close, mut mse_sum) = (0, 0.0);
        for seed in 0..seeds {
            let mut rng = Seed::new(seed).child("tournament", 0).rng();
            let w0 = gaussian_vec(d, &mut rng);
            let mut u = gaussian_vec(d, &mut rng);
            u /= u.norm();
            let mut list: Vec<Vector> = (0..5)
                .map(|_| {
                    let mut v = gaussian_vec(d, &mut rng);
                    v /= v.norm();
                    &w0 + v * sigma * rng.random_range(20.0..40.0)
                })
                .collect();
            list.insert(rng.random_range(0..=list.len()), &w0 + &u * (0.05 * sigma));
            let parts = tournament_parts(2.0, list.len(), delta);
            let per_part = (sigma * sigma / (beta * beta)).ceil() as usize;
            let samples: Vec<RegressionSample> = (0..parts * per_part).map(|_| linear_sample(&w0, sigma, &mut rng)).collect();
            let params = TournamentParams { beta, c1, parts };
            let Ok(i) = select_tournament_index(&samples, &list, &params, &mut rng) else { continue };
            let err = (&list[i] - &w0).norm();
            if err <= 13.0 * c1 * beta {
                close += 1;
            }
            // Σ = I: population MSE is σ² + ‖w − w0‖²
            mse_sum += sigma * sigma + err * err;
        }
        let rate = close as f64 / seeds as f64;
        let mse = mse_sum / seeds as f64;
        let pass = rate >= 0.9 && mse <= 1.05 * sigma * sigma;
        (pass, format!("within 13·C1·β in {close}/{seeds} seeds, mean prediction MSE {mse:.4}"))
    })
}

/// Fast checks run by `batchmix selftest`.
/// Scale used by the end-to-end criteria: d = 50, |B_m| = 128.
pub const ACCEPTANCE_SCALE: f64 = 2.0;

fn acceptance_config(name: &str, sweep: Vec<usize>) -> ExperimentConfig {
    let mut cfg = preset(name).expect("built-in preset").scaled(ACCEPTANCE_SCALE).expect("valid scale");
    cfg.sweep = sweep;
    cfg
}

/// Runs a preset at `n_m ∈ {4, 32}` over its seeds and returns the CSV bytes.
pub fn trend_run(name: &str) -> Result<(Vec<EvalRecord>, Vec<u8>), HarnessError> {
    let cfg = acceptance_config(name, vec![4, 32]);
    let records = run_experiment(&cfg);
    let mut bytes = Vec::new();
    write_records(&mut bytes, &records)?;
    Ok((records, bytes))
}

/// Criteria 6 and 7: mean held-out MSE at n_m = 32 is at most 2σ² and lies
/// below the n_m = 4 mean by at least one pooled standard error.
pub fn trend(id: u32, name: &'static str, records: &[EvalRecord]) -> CheckResult {
    timed(id, name, || {
        let failed = records.iter().filter(|r| r.failed()).count();
        let rows = summarize(records);
        let at = |n: usize| rows.iter().find(|r| r.n_m == n);
        let (Some(small), Some(large)) = (at(4), at(32)) else {
            return (false, "missing sweep rows".into());
        };
        let pooled = (small.stderr.powi(2) + large.stderr.powi(2)).sqrt();
        let pass = failed == 0 && large.mean_mse <= 2.0 && small.mean_mse - large.mean_mse >= pooled;
        let detail = format!(
            "mse(n_m=4) {:.3} ± {:.3}, mse(n_m=32) {:.3} ± {:.3}, need <= 2 and a gap >= {:.3}; failed cells {failed}",
            small.mean_mse, small.stderr, large.mean_mse, large.stderr, pooled
        );
        (pass, detail)
    })
}

/// Criterion 8: every heavy component has a list entry within 0.5σ of its
/// planted vector in at least 8 of 10 seeds.
pub fn fig4_coverage() -> CheckResult {
    timed(8, "fig4 heavy coverage", || {
        let cfg = acceptance_config("fig4", vec![32]);
        let cells = run_cells(&cfg);
        let heavy = match &cfg.mixture {
            MixtureSource::Recipe(r) => r.heavy,
            MixtureSource::Explicit(m) => m.heavy_set.len(),
        };
        let mut hits = vec![0usize; heavy];
        let mut nearest = vec![Vec::new(); heavy];
        for (out, _) in &cells {
            let Some(out) = out else { continue };
            for (j, &comp) in out.mixture.heavy_set.iter().enumerate() {
                let w = out.mixture.components[comp].w.as_ref().expect("linear component");
                let sigma = out.mixture.components[comp].noise_sigma;
                let best = out.estimates.iter().map(|e| (e - w).norm()).fold(f64::INFINITY, f64::min);
                nearest[j].push(best);
                hits[j] += usize::from(best <= 0.5 * sigma);
            }
        }
        let pass = hits.iter().all(|&h| h >= 8);
        let medians: Vec<String> =
            nearest.iter().map(|v| format!("{:.2}", batchmix::linalg::lower_median(v).unwrap_or(f64::NAN))).collect();
        (pass, format!("seeds covered per heavy component {hits:?} of {}; median nearest distance [{}]", cells.len(), medians.join(", ")))
    })
}

/// Criterion 10: repeating the criterion-6 run gives the same CSV bytes.
pub fn determinism(first: &[u8]) -> CheckResult {
    timed(10, "determinism", || match trend_run("fig1") {
        Ok((_, second)) => {
            let same = first == second.as_slice();
            (same, format!("{} bytes, {}", first.len(), if same { "identical" } else { "different" }))
        }
        Err(e) => (false, e.to_string()),
    })
}

pub fn quick_suite() -> Vec<CheckResult> {
    vec![clip_calculus(), clip_bias(), subspace_lemma(), filter_characteristics(), selection_oracle(), tournament()]
}
