//! Round-based clipped gradient descent for one target batch, and list
//! recovery by repeating it over randomly drawn target batches.

use rand::Rng;
use rayon::prelude::*;

use crate::clip::{clip_est, ClipParams};
use crate::error::{Error, Result};
use crate::grad_est::{grad_est, GradEstParams};
use crate::model::{partition_batches, split_indices, AlgoConfig, Batch, BatchPool, ComponentCount, GradContext, RegressionSample};
use crate::rng::Seed;
use crate::subspace::grad_sub_est;
use crate::Vector;

/// Diagnostics for one descent round.
#[derive(Debug, Clone, PartialEq)]
pub struct RoundTrace {
    pub r: usize,
    /// Iterate the round started from.
    pub w: Vector,
    pub kappa: f64,
    pub ell: usize,
    pub kept_count: usize,
    pub delta_norm: f64,
    /// The subspace basis was padded because the moment matrix was rank deficient.
    pub degenerate: bool,
    pub test_reps: usize,
    pub groups: usize,
    /// Ids of the small batches used for the subspace.
    pub small_ids: Vec<usize>,
    /// Ids of the medium batches used for the gradient.
    pub medium_ids: Vec<usize>,
    /// Target-batch sample indices used for the clipping scale.
    pub star_clip: Vec<usize>,
    /// Target-batch sample indices used for the gradient filter.
    pub star_grad: Vec<usize>,
}

#[derive(Debug, Clone)]
pub struct SingleRun {
    pub w: Vector,
    pub rounds: Vec<RoundTrace>,
    pub warnings: Vec<String>,
}

/// Runs `rounds` steps of `w ← w − Δ/C1` from `w = 0`, where `step` returns Δ
/// for the round index and current iterate. Returns all iterates, first to last.
pub fn descend<F>(d: usize, rounds: usize, c1: f64, mut step: F) -> Result<Vec<Vector>>
where
    F: FnMut(usize, &Vector) -> Result<Vector>,
{
    let mut path = vec![Vector::zeros(d)];
    for r in 0..rounds {
        let w = path.last().expect("nonempty");
        let delta = step(r, w).map_err(|e| e.in_round(r))?;
        if delta.len() != d {
            return Err(Error::DimensionMismatch { expected: d, got: delta.len() }.in_round(r));
        }
        path.push(w - delta / c1);
    }
    Ok(path)
}

fn pick(samples: &[RegressionSample], ix: &[usize]) -> Vec<RegressionSample> {
    ix.iter().map(|&i| samples[i].clone()).collect()
}

/// Estimates the regression vector of the component that generated `b_star`.
///
/// The small and medium pools are split into `R` disjoint shares unless the
/// corresponding `reuse_*` flag is set. `b_star` is cut into `2R` parts, the
/// even ones feeding the clipping scale and the odd ones the gradient filter;
/// with `reuse_medium` it is instead re-halved every round. Subroutine
/// repetition counts that do not fit the available samples are reduced, with
/// a warning.
pub fn estimate_single(b_star: &Batch, small: &BatchPool, medium: &BatchPool, cfg: &AlgoConfig, seed: Seed) -> Result<SingleRun> {
    cfg.validate()?;
    if small.is_empty() || medium.is_empty() {
        return Err(Error::EmptyPool);
    }
    for pool in [small, medium] {
        if let Some(dim) = pool.dim().filter(|&dim| dim != cfg.d) {
            return Err(Error::DimensionMismatch { expected: cfg.d, got: dim });
        }
    }
    let mut warnings = Vec::new();
    let star = b_star.samples();
    let mut rounds = cfg.rounds();
    // each round needs two clip samples and two filter samples from b*
    if star.len() < 4 {
        return Err(Error::BatchTooShort { parts: 4, available: star.len() });
    }
    if !cfg.reuse_medium && star.len() < 4 * rounds {
        let reduced = star.len() / 4;
        warnings.push(format!("target batch has {} samples; rounds reduced from {rounds} to {reduced}", star.len()));
        rounds = reduced;
    }
    let delta_p = cfg.delta_prime(rounds);
    let ell = cfg.ell();

    let shares = |pool: &BatchPool, reuse: bool, label: &str| -> Result<Vec<BatchPool>> {
        if reuse {
            Ok(vec![pool.clone(); rounds])
        } else {
            partition_batches(pool, rounds, &mut seed.child(label, 0).rng())
        }
    };
    let small_shares = shares(small, cfg.reuse_small, "small")?;
    let medium_shares = shares(medium, cfg.reuse_medium, "medium")?;
    let star_parts = if cfg.reuse_medium {
        Vec::new()
    } else {
        split_indices(star.len(), 2 * rounds, &mut seed.child("star", 0).rng())
    };

    let clip_params = ClipParams { eps1: cfg.eps1(), sigma: cfg.sigma_eff(), c: cfg.c, c1: cfg.c1 };
    let mut traces = Vec::with_capacity(rounds);
    let clamp_note = |what: &str, from: usize, to: usize, warnings: &mut Vec<String>| {
        let msg = format!("{what} reduced from {from} to {to} to fit the data");
        if !warnings.contains(&msg) {
            warnings.push(msg);
        }
    };

    let path = descend(cfg.d, rounds, cfg.c1, |r, w| {
        let (clip_ix, grad_ix) = if cfg.reuse_medium {
            let mut halves = split_indices(star.len(), 2, &mut seed.child("star-round", r as u64).rng());
            let grad = halves.pop().expect("two halves");
            (halves.pop().expect("two halves"), grad)
        } else {
            (star_parts[2 * r].clone(), star_parts[2 * r + 1].clone())
        };
        let s_clip = pick(star, &clip_ix);
        let s_grad = pick(star, &grad_ix);

        let want_t = cfg.clip_parts(delta_p);
        let t = want_t.min(s_clip.len());
        if t < want_t {
            clamp_note("clip parts", want_t, t, &mut warnings);
        }
        let scale = clip_est(&s_clip, w, &clip_params, t, &mut seed.child("clip", r as u64).rng())?;
        let ctx = GradContext::new(w.clone(), scale.kappa);

        let sub = grad_sub_est(&small_shares[r], &ctx, ell, seed.child("subspace", r as u64))?;

        let med = &medium_shares[r];
        let shortest = med.batches.iter().map(Batch::len).min().unwrap_or(0);
        let want_t1 = cfg.test_repetitions(med.len(), delta_p);
        let t1 = want_t1.min(shortest.div_ceil(2) / 2).min(s_grad.len() / 2).max(1);
        if t1 < want_t1 {
            clamp_note("test repetitions", want_t1, t1, &mut warnings);
        }
        let want_t2 = cfg.estimation_groups(delta_p);
        let t2 = want_t2.min(shortest / 2).max(1);
        if t2 < want_t2 {
            clamp_note("estimation groups", want_t2, t2, &mut warnings);
        }
        let params = GradEstParams { eps: cfg.eps2(), c1: cfg.c1, test_reps: t1, groups: t2 };
        let est = grad_est(med, &s_grad, &ctx, &sub.projection, &params, seed.child("grad", r as u64))?;

        traces.push(RoundTrace {
            r,
            w: w.clone(),
            kappa: scale.kappa,
            ell: sub.projection.rank(),
            kept_count: est.report.kept.len(),
            delta_norm: est.delta.norm(),
            degenerate: sub.degenerate,
            test_reps: t1,
            groups: t2,
            small_ids: small_shares[r].batches.iter().map(|b| b.id).collect(),
            medium_ids: med.batches.iter().map(|b| b.id).collect(),
            star_clip: clip_ix,
            star_grad: grad_ix,
        });
        Ok(est.delta)
    })?;
    for w in &warnings {
        log::info!("{w}");
    }
    Ok(SingleRun { w: path.last().expect("nonempty").clone(), rounds: traces, warnings })
}

/// Candidate regression vectors from repeated target draws.
#[derive(Debug, Clone)]
pub struct EstimateList {
    pub estimates: Vec<Vector>,
    /// Id of the target batch behind each estimate.
    pub provenance: Vec<usize>,
    /// Draw index and error of every failed draw.
    pub failures: Vec<(usize, Error)>,
}

impl EstimateList {
    pub fn len(&self) -> usize {
        self.estimates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.estimates.is_empty()
    }
}

/// `ceil((1/α_m)·ln(k_eff/δ))` with `k_eff = min(k, 1/α_m)`, at least 1.
pub fn default_draws(cfg: &AlgoConfig) -> usize {
    let inv = 1.0 / cfg.alpha_m;
    let k_eff = match cfg.k {
        ComponentCount::Finite(k) => (k as f64).min(inv),
        ComponentCount::Unbounded => inv,
    };
    let v = (inv * (k_eff / cfg.delta).ln()).ceil();
    if v.is_finite() && v >= 1.0 {
        v as usize
    } else {
        1
    }
}

/// Draws `draws` target batches from `medium` uniformly with replacement and
/// runs [`estimate_single`] on each with that batch removed from the medium
/// pool. Draws run in parallel on independent streams.
pub fn recover_list(small: &BatchPool, medium: &BatchPool, cfg: &AlgoConfig, draws: usize, seed: Seed) -> Result<EstimateList> {
    cfg.validate()?;
    if medium.is_empty() {
        return Err(Error::EmptyPool);
    }
    let picks: Vec<usize> =
        (0..draws).map(|i| seed.child("draw", i as u64).rng().random_range(0..medium.len())).collect();
    let runs: Vec<(usize, Result<SingleRun>)> = picks
        .par_iter()
        .map(|&p| {
            let b = &medium.batches[p];
            (b.id, estimate_single(b, small, &medium.without(b.id), cfg, seed.child("run", b.id as u64)))
        })
        .collect();
    let mut list = EstimateList { estimates: Vec::new(), provenance: Vec::new(), failures: Vec::new() };
    for (i, (id, run)) in runs.into_iter().enumerate() {
        match run {
            Ok(run) => {
                list.estimates.push(run.w);
                list.provenance.push(id);
            }
            Err(e) => list.failures.push((i, e)),
        }
    }
    if list.is_empty() {
        return Err(Error::NoEstimates);
    }
    Ok(list)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::PoolKind;
    use rand_distr::{Distribution, StandardNormal};

    fn gaussian_pool(kind: PoolKind, n: usize, size: usize, w: &Vector, sigma: f64, first_id: usize, seed: u64) -> BatchPool {
        let d = w.len();
        let mut rng = Seed::new(seed).rng();
        let batches = (0..n)
            .map(|b| {
                let samples = (0..size)
                    .map(|_| {
                        let x = Vector::from_fn(d, |_, _| StandardNormal.sample(&mut rng));
                        let noise: f64 = StandardNormal.sample(&mut rng);
                        let y = x.dot(w) + sigma * noise;
                        RegressionSample::new(x, y)
                    })
                    .collect();
                Batch::new(first_id + b, samples)
            })
            .collect();
        BatchPool::new(kind, batches)
    }

    #[test]
    fn exact_gradient_descent_contracts() {
        // quadratic with Hessian I: gradient is w − w0
        let w0 = Vector::from_vec(vec![1.0, -2.0, 0.5, 3.0, 0.0]);
        let path = descend(5, 6, 2.0, |_, w| Ok(w - &w0)).unwrap();
        let errs: Vec<f64> = path.iter().map(|w| (w - &w0).norm()).collect();
        for pair in errs.windows(2) {
            assert!(pair[1] <= pair[0]);
            assert!((pair[1] - 0.5 * pair[0]).abs() < 1e-12);
        }
        let one_step = descend(5, 1, 1.0, |_, w| Ok(w - &w0)).unwrap();
        assert!((&one_step[1] - &w0).norm() < 1e-15);
    }

    #[test]
    fn descent_errors_carry_round() {
        let err = descend(2, 3, 1.0, |r, w| if r == 1 { Err(Error::EmptyFilteredSet) } else { Ok(w.clone()) }).unwrap_err();
        assert_eq!(err, Error::Round { round: 1, source: Box::new(Error::EmptyFilteredSet) });
        assert_eq!(err.root(), &Error::EmptyFilteredSet);
    }

    fn single_component_setup() -> (Vector, BatchPool, BatchPool, Batch, AlgoConfig) {
        let w0 = Vector::from_vec(vec![1.0, -1.0, 0.5]);
        let small = gaussian_pool(PoolKind::Small, 400, 2, &w0, 0.1, 0, 1);
        let medium = gaussian_pool(PoolKind::Medium, 30, 40, &w0, 0.1, 1000, 2);
        let star = gaussian_pool(PoolKind::Medium, 1, 200, &w0, 0.1, 5000, 3).batches.remove(0);
        let mut cfg = AlgoConfig::new(3, ComponentCount::Finite(1), 1.0, 0.1, 1.0, 2.0);
        cfg.constants.c_r = 1.0;
        (w0, small, medium, star, cfg)
    }

    #[test]
    fn rounds_use_disjoint_data() {
        let (_, small, medium, star, cfg) = single_component_setup();
        let run = estimate_single(&star, &small, &medium, &cfg, Seed::new(9)).unwrap();
        assert_eq!(run.rounds.len(), cfg.rounds());
        let mut small_ids: Vec<usize> = run.rounds.iter().flat_map(|t| t.small_ids.clone()).collect();
        let mut medium_ids: Vec<usize> = run.rounds.iter().flat_map(|t| t.medium_ids.clone()).collect();
        let mut star_ix: Vec<usize> =
            run.rounds.iter().flat_map(|t| t.star_clip.iter().chain(&t.star_grad).copied()).collect();
        for ids in [&mut small_ids, &mut medium_ids, &mut star_ix] {
            let n = ids.len();
            ids.sort_unstable();
            ids.dedup();
            assert_eq!(ids.len(), n);
        }
        for t in &run.rounds {
            assert!(t.delta_norm >= 0.0);
            assert!(t.kept_count <= t.medium_ids.len());
        }
    }

    #[test]
    fn single_component_converges_and_is_deterministic() {
        let (w0, small, medium, star, cfg) = single_component_setup();
        let a = estimate_single(&star, &small, &medium, &cfg, Seed::new(4)).unwrap();
        let b = estimate_single(&star, &small, &medium, &cfg, Seed::new(4)).unwrap();
        assert_eq!(a.w, b.w);
        assert!((&a.w - &w0).norm() < 0.2, "error {}", (&a.w - &w0).norm());
    }

    #[test]
    fn short_target_reduces_rounds() {
        let (w0, small, medium, _, mut cfg) = single_component_setup();
        // two target samples per filter part are too noisy for the default threshold
        cfg.constants.c_eps2 = 50.0;
        let star = gaussian_pool(PoolKind::Medium, 1, 9, &w0, 0.1, 7000, 5).batches.remove(0);
        assert!(cfg.rounds() > 2);
        let run = estimate_single(&star, &small, &medium, &cfg, Seed::new(1)).unwrap();
        assert_eq!(run.rounds.len(), 2);
        assert!(run.warnings.iter().any(|w| w.contains("rounds reduced")));
    }

    #[test]
    fn unit_ratio_keeps_at_least_one_round() {
        let mut cfg = AlgoConfig::new(3, ComponentCount::Finite(1), 1.0, 1.0, 1.0, 1.0);
        cfg.constants.c_r = 0.01;
        assert_eq!(cfg.rounds(), 1);
    }

    #[test]
    fn list_recovery_single_component() {
        let (w0, small, medium, _, mut cfg) = single_component_setup();
        cfg.reuse_medium = true;
        let draws = default_draws(&cfg);
        assert_eq!(draws, 3); // ⌈ln 10⌉
        let list = recover_list(&small, &medium, &cfg, draws, Seed::new(2)).unwrap();
        assert_eq!(list.len() + list.failures.len(), draws);
        assert!(!list.is_empty());
        assert!(list.estimates.iter().all(|w| (w - &w0).norm() < 0.3));
        let again = recover_list(&small, &medium, &cfg, draws, Seed::new(2)).unwrap();
        assert_eq!(list.estimates, again.estimates);
        assert_eq!(list.provenance, again.provenance);
    }
}
