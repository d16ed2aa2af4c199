//! Filtered median-of-means estimate of the projected clipped gradient.
//!
//! Each medium batch is halved. The first half is compared with the target
//! samples through `T1` independent inner-product statistics `ζ`; a batch is
//! kept when the median `ζ` is at most `ε²κ²C1`. The second halves of the kept
//! batches are cut into `T2` groups, each group gives a mean projected
//! gradient `Δᵢ`, and the group whose median distance to the others is
//! smallest is returned.

use rayon::prelude::*;

use crate::clip::clip_grad_set;
use crate::error::{Error, Result};
use crate::linalg::{lower_median, pairwise_sum};
use crate::model::{chunk_even, split_indices, BatchPool, GradContext, RegressionSample};
use crate::rng::Seed;
use crate::subspace::Projection;
use crate::Vector;

#[derive(Debug, Clone, PartialEq)]
pub struct FilterReport {
    /// Ids of the batches that passed the test, in pool order.
    pub kept: Vec<usize>,
    /// Median `ζ` per batch, in pool order.
    pub zeta_medians: Vec<f64>,
    pub threshold: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradEstParams {
    /// Accuracy parameter `ε` of the filter threshold (`ε2` in the driver).
    pub eps: f64,
    pub c1: f64,
    /// `T1`: number of `ζ` statistics per batch.
    pub test_reps: usize,
    /// `T2`: number of median-of-means groups.
    pub groups: usize,
}

impl GradEstParams {
    pub fn threshold(&self, kappa: f64) -> f64 {
        self.eps * self.eps * kappa * kappa * self.c1
    }
}

#[derive(Debug, Clone)]
pub struct GradEstimate {
    /// Estimate in `ℝ^d`, lying in the range of the projection.
    pub delta: Vector,
    pub report: FilterReport,
    /// Index of the selected median-of-means group.
    pub selected: usize,
}

/// `ζ = ⟨Uᵀ(g₁ − h₁), Uᵀ(g₂ − h₂)⟩` where `g₁, g₂` are the clipped gradients
/// of two batch parts and `h₁, h₂` those of two target parts.
pub fn zeta_statistic(
    batch_a: &[&RegressionSample],
    batch_b: &[&RegressionSample],
    star_a: &[&RegressionSample],
    star_b: &[&RegressionSample],
    ctx: &GradContext,
    proj: &Projection,
) -> Result<f64> {
    let coords = |part: &[&RegressionSample]| -> Result<Vector> {
        Ok(proj.coords(&clip_grad_set(part.iter().copied(), ctx)?.0))
    };
    let first = coords(batch_a)? - coords(star_a)?;
    let second = coords(batch_b)? - coords(star_b)?;
    Ok(first.dot(&second))
}

/// Index minimizing the lower median distance to the other points.
///
/// `ξᵢ = median{‖Δᵢ − Δⱼ‖ : j ≠ i}`; ties go to the smallest index. A single
/// point is returned as is.
pub fn select_central(points: &[Vector]) -> Option<usize> {
    let n = points.len();
    if n == 0 {
        return None;
    }
    let mut best = (0, f64::INFINITY);
    for i in 0..n {
        let dists: Vec<f64> = (0..n).filter(|&j| j != i).map(|j| (&points[i] - &points[j]).norm()).collect();
        let xi = lower_median(&dists).unwrap_or(0.0);
        if xi < best.1 {
            best = (i, xi);
        }
    }
    Some(best.0)
}

struct BatchStats {
    id: usize,
    zeta_median: f64,
    /// Projected clipped gradient of each estimation group, in ℓ coordinates.
    groups: Vec<Vector>,
}

/// Estimates the target's projected expected clipped gradient from medium
/// batches and target samples `star`.
///
/// Per-batch splits come from `seed.child("batch", id)` and the target split
/// from `seed.child("star", 0)`, so reordering the pool does not change the
/// result.
pub fn grad_est(
    pool: &BatchPool,
    star: &[RegressionSample],
    ctx: &GradContext,
    proj: &Projection,
    params: &GradEstParams,
    seed: Seed,
) -> Result<GradEstimate> {
    if pool.is_empty() {
        return Err(Error::EmptyPool);
    }
    let t1 = params.test_reps.max(1);
    let t2 = params.groups.max(1);
    if star.len() < 2 * t1 {
        return Err(Error::BatchTooShort { parts: 2 * t1, available: star.len() });
    }
    let ell = proj.rank();
    let coords = |part: &[&RegressionSample]| -> Result<Vector> {
        Ok(proj.coords(&clip_grad_set(part.iter().copied(), ctx)?.0))
    };

    let star_parts: Vec<Vector> = split_indices(star.len(), 2 * t1, &mut seed.child("star", 0).rng())
        .iter()
        .map(|ix| coords(&ix.iter().map(|&i| &star[i]).collect::<Vec<_>>()))
        .collect::<Result<_>>()?;

    let stats: Vec<BatchStats> = pool
        .batches
        .par_iter()
        .map(|b| {
            let n = b.len();
            let (first, second) = (n.div_ceil(2), n / 2);
            if first < 2 * t1 || second < t2 {
                return Err(Error::BatchTooShortForSplits { batch: b.id, available: n, needed: (4 * t1).max(2 * t2) });
            }
            let mut rng = seed.child("batch", b.id as u64).rng();
            let halves = split_indices(n, 2, &mut rng);
            let s = b.samples();
            let test_parts = chunk_even(&halves[0], 2 * t1);
            let est_parts = chunk_even(&halves[1], t2);
            let part_coords = |ix: &Vec<usize>| coords(&ix.iter().map(|&i| &s[i]).collect::<Vec<_>>());

            let test: Vec<Vector> = test_parts.iter().map(part_coords).collect::<Result<_>>()?;
            let zetas: Vec<f64> = (0..t1)
                .map(|j| (&test[j] - &star_parts[j]).dot(&(&test[t1 + j] - &star_parts[t1 + j])))
                .collect();
            let groups = est_parts.iter().map(part_coords).collect::<Result<_>>()?;
            Ok(BatchStats { id: b.id, zeta_median: lower_median(&zetas).expect("t1 >= 1"), groups })
        })
        .collect::<Result<_>>()?;

    let threshold = params.threshold(ctx.kappa);
    let report = FilterReport {
        kept: stats.iter().filter(|s| s.zeta_median <= threshold).map(|s| s.id).collect(),
        zeta_medians: stats.iter().map(|s| s.zeta_median).collect(),
        threshold,
    };
    let mut kept: Vec<&BatchStats> = stats.iter().filter(|s| s.zeta_median <= threshold).collect();
    if kept.is_empty() {
        return Err(Error::EmptyFilteredSet);
    }
    kept.sort_by_key(|s| s.id);

    let means: Vec<Vector> = (0..t2)
        .map(|i| {
            let parts: Vec<Vector> = kept.iter().map(|s| s.groups[i].clone()).collect();
            pairwise_sum(&parts, ell) / kept.len() as f64
        })
        .collect();
    let selected = select_central(&means).expect("t2 >= 1");
    Ok(GradEstimate { delta: proj.embed(&means[selected]), report, selected })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Batch, PoolKind};

    fn v(xs: &[f64]) -> Vector {
        Vector::from_column_slice(xs)
    }

    #[test]
    fn zeta_zero_for_identical_parts() {
        let s = RegressionSample::new(v(&[1.0, 2.0]), 0.5);
        let part = vec![&s, &s];
        let ctx = GradContext::new(v(&[0.1, 0.2]), 3.0);
        let z = zeta_statistic(&part, &part, &part, &part, &ctx, &Projection::identity(2)).unwrap();
        assert_eq!(z, 0.0);
    }

    #[test]
    fn zeta_with_identity_projection_is_squared_norm() {
        // batch residual 1 at x=(1,2) → g = (1,2); target residual 0 → h = 0
        let b = RegressionSample::new(v(&[1.0, 2.0]), -1.0);
        let t = RegressionSample::new(v(&[1.0, 2.0]), 0.0);
        let ctx = GradContext::new(v(&[0.0, 0.0]), 10.0);
        let z = zeta_statistic(&[&b], &[&b], &[&t], &[&t], &ctx, &Projection::identity(2)).unwrap();
        assert!((z - 5.0).abs() < 1e-12);
    }

    #[test]
    fn zeta_rejects_empty_part() {
        let s = RegressionSample::new(v(&[1.0]), 0.0);
        let ctx = GradContext::new(v(&[0.0]), 1.0);
        let err = zeta_statistic(&[], &[&s], &[&s], &[&s], &ctx, &Projection::identity(1)).unwrap_err();
        assert_eq!(err, Error::EmptySampleSet);
    }

    #[test]
    fn central_selection_avoids_outlier() {
        let pts = vec![v(&[0.0, 0.0]), v(&[0.0, 0.1]), v(&[9.0, 9.0])];
        let i = select_central(&pts).unwrap();
        assert!(i == 0 || i == 1);
        // ξ₀ = median{0.1, 12.73} = 0.1 = ξ₁; tie to smallest index
        assert_eq!(i, 0);
        assert_eq!(select_central(&[v(&[3.0])]), Some(0));
        assert_eq!(select_central(&[]), None);
    }

    fn constant_pool(n_batches: usize, size: usize, w_true: &Vector) -> BatchPool {
        let d = w_true.len();
        let mut batches = Vec::new();
        for b in 0..n_batches {
            let samples = (0..size)
                .map(|i| {
                    let mut x = Vector::zeros(d);
                    x[i % d] = 1.0;
                    let y = x.dot(w_true);
                    RegressionSample::new(x, y)
                })
                .collect();
            batches.push(Batch::new(b, samples));
        }
        BatchPool::new(PoolKind::Medium, batches)
    }

    #[test]
    fn zero_gradient_keeps_everything() {
        // at w = w* every residual is zero, so every ζ and every group mean is zero
        let w_true = v(&[1.0, -2.0]);
        let pool = constant_pool(5, 16, &w_true);
        let star = pool.batches[0].samples().to_vec();
        let params = GradEstParams { eps: 0.1, c1: 1.0, test_reps: 2, groups: 2 };
        let ctx = GradContext::new(w_true.clone(), 100.0);
        let out = grad_est(&pool, &star, &ctx, &Projection::identity(2), &params, Seed::new(1)).unwrap();
        assert_eq!(out.report.kept, vec![0, 1, 2, 3, 4]);
        assert_eq!(out.delta.norm(), 0.0);
        assert!(out.report.zeta_medians.iter().all(|z| *z == 0.0));
    }

    #[test]
    fn too_short_batch_is_reported() {
        let pool = constant_pool(2, 3, &v(&[1.0]));
        let star = pool.batches[0].samples().to_vec();
        let params = GradEstParams { eps: 0.1, c1: 1.0, test_reps: 1, groups: 2 };
        let err = grad_est(&pool, &star, &GradContext::new(v(&[0.0]), 1.0), &Projection::identity(1), &params, Seed::new(0))
            .unwrap_err();
        assert!(matches!(err, Error::BatchTooShortForSplits { batch: 0, .. }));
    }
}
