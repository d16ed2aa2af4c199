//! Choosing one candidate from a list for a new batch.

use rand::Rng;

use crate::error::{Error, Result};
use crate::linalg::{lower_median, pairwise_sum_scalar};
use crate::model::{ceil_log, split_sample_refs, RegressionSample};
use crate::Vector;

/// Mean squared error of `w` on `samples`.
pub fn empirical_mse(samples: &[RegressionSample], w: &Vector) -> f64 {
    let sq: Vec<f64> = samples.iter().map(|s| s.residual(w).powi(2)).collect();
    pairwise_sum_scalar(&sq) / samples.len() as f64
}

/// Index of the candidate with the smallest empirical MSE; ties go to the
/// smallest index.
pub fn select_best_mse_index(samples: &[RegressionSample], list: &[Vector]) -> Result<usize> {
    if samples.is_empty() {
        return Err(Error::EmptySampleSet);
    }
    if list.is_empty() {
        return Err(Error::EmptyList);
    }
    let mut best = (0, f64::INFINITY);
    for (i, w) in list.iter().enumerate() {
        let mse = empirical_mse(samples, w);
        if mse < best.1 {
            best = (i, mse);
        }
    }
    Ok(best.0)
}

pub fn select_best_mse(samples: &[RegressionSample], list: &[Vector]) -> Result<Vector> {
    Ok(list[select_best_mse_index(samples, list)?].clone())
}

/// Part count `T3 = ceil(c_t3 · ln(|L|/δ))`.
pub fn tournament_parts(c_t3: f64, list_len: usize, delta: f64) -> usize {
    ceil_log(c_t3, list_len.max(1) as f64 / delta)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TournamentParams {
    pub beta: f64,
    pub c1: f64,
    /// Number of median-of-means parts `T3`.
    pub parts: usize,
}

/// Pairwise elimination tournament.
///
/// While two survivors `w, w'` are at least `12·C1·β` apart (first such pair
/// in lexicographic index order), the statistic
/// `a = median_j mean_{S_j} (x·w − y)(x·(w − w'))` decides which is removed:
/// `w` if `a > ‖w − w'‖²/4`, else `w'`. Returns the index of the smallest
/// surviving entry.
pub fn select_tournament_index<R: Rng + ?Sized>(
    samples: &[RegressionSample],
    list: &[Vector],
    params: &TournamentParams,
    rng: &mut R,
) -> Result<usize> {
    if list.is_empty() {
        return Err(Error::EmptyList);
    }
    if list.len() == 1 {
        return Ok(0);
    }
    if params.parts == 0 || samples.len() < params.parts {
        return Err(Error::TooFewSelectionSamples { needed: params.parts.max(1), available: samples.len() });
    }
    let parts = split_sample_refs(samples, params.parts, rng)?;
    let radius = 12.0 * params.c1 * params.beta;
    let mut alive = vec![true; list.len()];
    'scan: loop {
        for i in 0..list.len() {
            for j in (i + 1)..list.len() {
                if !alive[i] || !alive[j] {
                    continue;
                }
                let diff = &list[i] - &list[j];
                let dist2 = diff.norm_squared();
                if dist2.sqrt() < radius {
                    continue;
                }
                let stats: Vec<f64> = parts
                    .iter()
                    .map(|part| {
                        let terms: Vec<f64> = part.iter().map(|s| s.residual(&list[i]) * s.x.dot(&diff)).collect();
                        pairwise_sum_scalar(&terms) / part.len() as f64
                    })
                    .collect();
                let a = lower_median(&stats).expect("parts nonempty");
                if a > dist2 / 4.0 {
                    alive[i] = false;
                } else {
                    alive[j] = false;
                }
                continue 'scan;
            }
        }
        break;
    }
    Ok(alive.iter().position(|&a| a).expect("one survivor remains"))
}

pub fn select_tournament<R: Rng + ?Sized>(
    samples: &[RegressionSample],
    list: &[Vector],
    params: &TournamentParams,
    rng: &mut R,
) -> Result<Vector> {
    Ok(list[select_tournament_index(samples, list, params, rng)?].clone())
}
