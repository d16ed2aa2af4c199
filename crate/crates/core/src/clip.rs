//! Clipped squared-loss gradients and the clipping-scale estimator.
//!
//! For a sample `(x, y)` and iterate `w` the clipped gradient is
//! `((x·w − y) / max(|x·w − y|, κ)) · κ · x`: the ordinary squared-loss
//! gradient with its residual capped at magnitude `κ`.

use rand::Rng;

use crate::error::{Error, Result};
use crate::linalg::{lower_median, pairwise_sum, pairwise_sum_scalar};
use crate::model::{split_sample_refs, GradContext, RegressionSample};
use crate::Vector;

/// Residual after capping its magnitude at `kappa` (`kappa = ∞` is the identity).
#[inline]
pub fn clipped_residual(residual: f64, kappa: f64) -> f64 {
    if residual.abs() <= kappa {
        residual
    } else {
        kappa.copysign(residual)
    }
}

pub fn clip_grad_sample(s: &RegressionSample, ctx: &GradContext) -> Vector {
    &s.x * clipped_residual(s.residual(&ctx.w), ctx.kappa)
}

/// Average clipped gradient of a sample set.
#[derive(Debug, Clone, PartialEq)]
pub struct ClippedGradient(pub Vector);

impl ClippedGradient {
    pub fn into_inner(self) -> Vector {
        self.0
    }
}

const BLOCK: usize = 16;

/// Mean clipped gradient over `samples`.
///
/// Samples are summed sequentially in blocks of 16 and the block sums are
/// combined by a fixed pairwise tree, so the result depends only on the
/// sample order.
pub fn clip_grad_set<'a, I>(samples: I, ctx: &GradContext) -> Result<ClippedGradient>
where
    I: IntoIterator<Item = &'a RegressionSample>,
{
    let refs: Vec<&RegressionSample> = samples.into_iter().collect();
    let first = refs.first().ok_or(Error::EmptySampleSet)?;
    let dim = first.dim();
    let blocks: Vec<Vector> = refs
        .chunks(BLOCK)
        .map(|chunk| {
            let mut acc = Vector::zeros(dim);
            for s in chunk {
                acc.axpy(clipped_residual(s.residual(&ctx.w), ctx.kappa), &s.x, 1.0);
            }
            acc
        })
        .collect();
    Ok(ClippedGradient(pairwise_sum(&blocks, dim) / refs.len() as f64))
}

/// Inputs of the clipping-scale rule besides the samples and the iterate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClipParams {
    /// Accuracy parameter `ε1`.
    pub eps1: f64,
    pub sigma: f64,
    /// Hypercontractivity constant `C`.
    pub c: f64,
    /// Covariance bound `C1`.
    pub c1: f64,
}

impl ClipParams {
    /// `κ` for a given mean-squared-residual estimate `θ`.
    pub fn kappa_for(&self, theta: f64) -> f64 {
        (32.0 * (self.c + 1.0) * self.c1 * (theta + 17.0 * self.sigma * self.sigma) / self.eps1).sqrt()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClipScale {
    pub kappa: f64,
    /// Median-of-means estimate of `E[(y − x·w)²]`.
    pub theta: f64,
    /// True when the zero-noise, zero-residual corner forced the epsilon floor.
    pub floored: bool,
}

/// Clipping scale from samples of the target component.
///
/// Splits `samples` into `parts` random near-equal parts, takes the lower
/// median of the per-part mean squared residuals as `θ`, and returns
/// `κ = √(32(C+1)·C1·(θ + 17σ²)/ε1)`. When that is zero (σ = 0 and every
/// residual zero) the scale is floored at `f64::EPSILON · max(1, ‖w‖)`.
pub fn clip_est<R: Rng + ?Sized>(
    samples: &[RegressionSample],
    w: &Vector,
    params: &ClipParams,
    parts: usize,
    rng: &mut R,
) -> Result<ClipScale> {
    if samples.is_empty() {
        return Err(Error::EmptySampleSet);
    }
    if parts == 0 || samples.len() < parts {
        return Err(Error::TooFewClipSamples { needed: parts.max(1), available: samples.len() });
    }
    let split = split_sample_refs(samples, parts, rng)?;
    let means: Vec<f64> = split
        .iter()
        .map(|part| {
            let sq: Vec<f64> = part.iter().map(|s| s.residual(w).powi(2)).collect();
            pairwise_sum_scalar(&sq) / part.len() as f64
        })
        .collect();
    let theta = lower_median(&means).expect("at least one part");
    let kappa = params.kappa_for(theta);
    if kappa > 0.0 {
        Ok(ClipScale { kappa, theta, floored: false })
    } else {
        Ok(ClipScale { kappa: f64::EPSILON * w.norm().max(1.0), theta, floored: true })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::Seed;
    use proptest::prelude::*;
    use rand::Rng;

    fn v(xs: &[f64]) -> Vector {
        Vector::from_column_slice(xs)
    }

    fn sample(x: &[f64], y: f64) -> RegressionSample {
        RegressionSample::new(v(x), y)
    }

    #[test]
    fn zero_residual_gives_zero() {
        let g = clip_grad_sample(&sample(&[3.0, 4.0], 0.0), &GradContext::new(v(&[0.0, 0.0]), 0.5));
        assert_eq!(g, v(&[0.0, 0.0]));
    }

    #[test]
    fn residual_is_capped() {
        let g = clip_grad_sample(&sample(&[1.0, 0.0], 0.0), &GradContext::new(v(&[2.0, 0.0]), 1.0));
        assert_eq!(g, v(&[1.0, 0.0]));
    }

    #[test]
    fn infinite_kappa_is_raw_gradient() {
        let g = clip_grad_sample(&sample(&[1.0, 2.0], 1.0), &GradContext::unclipped(v(&[1.0, 1.0])));
        assert_eq!(g, v(&[2.0, 4.0]));
    }

    #[test]
    fn set_mean() {
        // residual 1 on x=(1,0) and on x=(0,1) at w=(1,1) with y chosen accordingly
        let s = vec![sample(&[1.0, 0.0], 0.0), sample(&[0.0, 1.0], 0.0)];
        let g = clip_grad_set(&s, &GradContext::new(v(&[1.0, 1.0]), 10.0)).unwrap();
        assert_eq!(g.0, v(&[0.5, 0.5]));

        let same = vec![sample(&[1.0, 2.0], 0.5); 5];
        let ctx = GradContext::new(v(&[0.3, -0.2]), 0.1);
        let g = clip_grad_set(&same, &ctx).unwrap();
        assert!((g.0 - clip_grad_sample(&same[0], &ctx)).norm() < 1e-15);

        let empty: Vec<RegressionSample> = vec![];
        assert_eq!(clip_grad_set(&empty, &ctx).unwrap_err(), Error::EmptySampleSet);
        assert_eq!(Error::EmptySampleSet.to_string(), "empty sample set");
    }

    #[test]
    fn unclipped_mean_matches_independent_oracle() {
        let mut rng = Seed::new(11).rng();
        let d = 7;
        let samples: Vec<RegressionSample> = (0..333)
            .map(|_| {
                let x: Vec<f64> = (0..d).map(|_| rng.random_range(-2.0..2.0)).collect();
                sample(&x, rng.random_range(-5.0..5.0))
            })
            .collect();
        let w: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
        // plain loops over slices, no nalgebra
        let mut oracle = vec![0.0; d];
        for s in &samples {
            let r: f64 = s.x.iter().zip(&w).map(|(a, b)| a * b).sum::<f64>() - s.y;
            for (o, xi) in oracle.iter_mut().zip(s.x.iter()) {
                *o += r * xi;
            }
        }
        let g = clip_grad_set(&samples, &GradContext::unclipped(v(&w))).unwrap();
        for i in 0..d {
            assert!((g.0[i] - oracle[i] / samples.len() as f64).abs() < 1e-12);
        }
    }

    #[test]
    fn clip_scale_hand_value() {
        // residual² = 4 everywhere, σ = C = C1 = ε1 = 1: κ = √(32·2·21) = √1344
        let s: Vec<RegressionSample> = (0..12).map(|i| sample(&[1.0], if i % 2 == 0 { 2.0 } else { -2.0 })).collect();
        let p = ClipParams { eps1: 1.0, sigma: 1.0, c: 1.0, c1: 1.0 };
        let out = clip_est(&s, &v(&[0.0]), &p, 3, &mut Seed::new(1).rng()).unwrap();
        assert_eq!(out.theta, 4.0);
        assert!((out.kappa - 1344f64.sqrt()).abs() < 1e-12);
        assert!((out.kappa - 36.661).abs() < 1e-3);
    }

    #[test]
    fn clip_scale_zero_corner_is_floored() {
        let s = vec![sample(&[1.0, 1.0], 2.0); 4];
        let p = ClipParams { eps1: 0.5, sigma: 0.0, c: 3.0, c1: 1.0 };
        let out = clip_est(&s, &v(&[1.0, 1.0]), &p, 2, &mut Seed::new(1).rng()).unwrap();
        assert!(out.floored);
        assert!(out.kappa > 0.0);
        assert_eq!(out.kappa, f64::EPSILON * 2f64.sqrt());
    }

    #[test]
    fn single_part_is_plain_mean() {
        let s: Vec<RegressionSample> = (1..=5).map(|i| sample(&[1.0], i as f64)).collect();
        let p = ClipParams { eps1: 1.0, sigma: 0.0, c: 1.0, c1: 1.0 };
        let out = clip_est(&s, &v(&[0.0]), &p, 1, &mut Seed::new(4).rng()).unwrap();
        assert!((out.theta - 11.0).abs() < 1e-12); // (1+4+9+16+25)/5
    }

    #[test]
    fn too_few_samples() {
        let s = vec![sample(&[1.0], 0.0); 2];
        let p = ClipParams { eps1: 1.0, sigma: 1.0, c: 1.0, c1: 1.0 };
        let err = clip_est(&s, &v(&[0.0]), &p, 3, &mut Seed::new(0).rng()).unwrap_err();
        assert!(err.to_string().contains("too few clip-estimation samples"));
    }

    proptest! {
        #[test]
        fn clip_properties(
            x in proptest::collection::vec(-10.0f64..10.0, 3),
            w in proptest::collection::vec(-10.0f64..10.0, 3),
            y in -50.0f64..50.0,
            kappa in 1e-3f64..100.0,
        ) {
            let s = RegressionSample::new(v(&x), y);
            let ctx = GradContext::new(v(&w), kappa);
            let clipped = clip_grad_sample(&s, &ctx);
            let raw = &s.x * s.residual(&ctx.w);
            prop_assert!(clipped.norm() <= kappa * s.x.norm() * (1.0 + 1e-12));
            if s.residual(&ctx.w).abs() <= kappa {
                prop_assert_eq!(&clipped, &raw);
            }
            // nonnegative multiple of the raw gradient
            let scale = clipped_residual(s.residual(&ctx.w), kappa) / s.residual(&ctx.w);
            prop_assert!(!(scale < 0.0));
        }
    }
}
