//! Gradient subspace estimation from small batches.
//!
//! Each batch is split into two random halves and the clipped gradients of
//! the halves, `u` and `v`, are combined into the symmetrized moment matrix
//! `A = (1/2N) Σ (u vᵀ + v uᵀ)`. Because the halves are independent, `E[A]`
//! is the mixture of outer products of per-component expected clipped
//! gradients; its top singular subspace therefore contains the target's
//! expected gradient up to a perturbation term.

use rayon::prelude::*;

use crate::clip::clip_grad_set;
use crate::error::{Error, Result};
use crate::linalg::{eigen_by_magnitude, orthonormal_completion, sym_spectral_norm};
use crate::model::{split_indices, BatchPool, GradContext};
use crate::rng::Seed;
use crate::{Matrix, Vector};

/// Rank-ℓ orthogonal projector `P = U Uᵀ`, stored by its orthonormal basis.
#[derive(Debug, Clone, PartialEq)]
pub struct Projection {
    basis: Matrix,
}

impl Projection {
    /// Wraps a `d×ℓ` matrix whose columns are orthonormal.
    ///
    /// Returns `None` if the columns fail the orthonormality check (1e-10 per
    /// entry of `UᵀU − I`).
    pub fn from_basis(basis: Matrix) -> Option<Self> {
        let p = Self { basis };
        (p.orthonormality_error() <= 1e-10).then_some(p)
    }

    pub fn identity(d: usize) -> Self {
        Self { basis: Matrix::identity(d, d) }
    }

    /// Span of the first `ell` coordinate axes.
    pub fn coordinate(d: usize, ell: usize) -> Self {
        Self { basis: Matrix::identity(d, ell) }
    }

    pub fn basis(&self) -> &Matrix {
        &self.basis
    }

    pub fn dim(&self) -> usize {
        self.basis.nrows()
    }

    pub fn rank(&self) -> usize {
        self.basis.ncols()
    }

    /// `Uᵀ v`
    pub fn coords(&self, v: &Vector) -> Vector {
        self.basis.tr_mul(v)
    }

    /// `U c`
    pub fn embed(&self, c: &Vector) -> Vector {
        &self.basis * c
    }

    /// `P v = U (Uᵀ v)`
    pub fn apply(&self, v: &Vector) -> Vector {
        self.embed(&self.coords(v))
    }

    /// Explicit `d×d` projector.
    pub fn matrix(&self) -> Matrix {
        &self.basis * self.basis.transpose()
    }

    /// Largest entry of `|UᵀU − I|`.
    pub fn orthonormality_error(&self) -> f64 {
        let gram = self.basis.tr_mul(&self.basis);
        (gram - Matrix::identity(self.rank(), self.rank())).abs().max()
    }
}

#[derive(Debug, Clone)]
pub struct SubspaceEstimate {
    pub projection: Projection,
    /// Fewer than ℓ eigenvalues were numerically nonzero and the basis was
    /// padded with an arbitrary orthonormal completion.
    pub degenerate: bool,
    /// Eigenvalues of the moment matrix, by decreasing magnitude.
    pub eigenvalues: Vec<f64>,
}

/// Top-ℓ singular subspace of a symmetric matrix.
///
/// Eigenvectors whose eigenvalue is below `1e-12·max(1, ‖a‖)` in magnitude are
/// replaced by an orthonormal completion; errors if none survive.
pub fn top_subspace(a: &Matrix, ell: usize) -> Result<SubspaceEstimate> {
    let d = a.nrows();
    if ell == 0 || ell > d {
        return Err(Error::RankOutOfRange { ell, dim: d });
    }
    let (values, vectors) = eigen_by_magnitude(a);
    let tol = 1e-12 * values.first().map_or(0.0, |v| v.abs()).max(1.0);
    let strong = values.iter().take(ell).take_while(|v| v.abs() > tol).count();
    if strong == 0 {
        return Err(Error::DegenerateSpectrum);
    }
    let head = vectors.columns(0, strong).into_owned();
    let basis = if strong < ell { orthonormal_completion(&head, ell) } else { head };
    Ok(SubspaceEstimate { projection: Projection { basis }, degenerate: strong < ell, eigenvalues: values })
}

/// Symmetrized moment matrix of paired half-batch clipped gradients.
///
/// The half split of each batch is drawn from `seed.child("halves", batch.id)`.
pub fn moment_matrix(pool: &BatchPool, ctx: &GradContext, seed: Seed) -> Result<Matrix> {
    let d = pool.dim().ok_or(Error::EmptyPool)?;
    let halves: Vec<(Vector, Vector)> = pool
        .batches
        .par_iter()
        .map(|b| {
            if b.len() < 2 {
                return Err(Error::BatchTooShort { parts: 2, available: b.len() });
            }
            let mut rng = seed.child("halves", b.id as u64).rng();
            let split = split_indices(b.len(), 2, &mut rng);
            let s = b.samples();
            let u = clip_grad_set(split[0].iter().map(|&i| &s[i]), ctx)?.0;
            let v = clip_grad_set(split[1].iter().map(|&i| &s[i]), ctx)?.0;
            if u.len() != d {
                return Err(Error::DimensionMismatch { expected: d, got: u.len() });
            }
            Ok((u, v))
        })
        .collect::<Result<_>>()?;
    let n = halves.len();
    let g = Matrix::from_fn(n, d, |r, c| halves[r].0[c]);
    let h = Matrix::from_fn(n, d, |r, c| halves[r].1[c]);
    let cross = g.tr_mul(&h);
    Ok((&cross + cross.transpose()) / (2.0 * n as f64))
}

/// Estimates an ℓ-dimensional subspace preserving the target's expected
/// clipped gradient.
pub fn grad_sub_est(pool: &BatchPool, ctx: &GradContext, ell: usize, seed: Seed) -> Result<SubspaceEstimate> {
    if pool.is_empty() {
        return Err(Error::EmptyPool);
    }
    let d = pool.dim().ok_or(Error::EmptyPool)?;
    if ell == 0 || ell > d {
        return Err(Error::RankOutOfRange { ell, dim: d });
    }
    let a = moment_matrix(pool, ctx, seed)?;
    top_subspace(&a, ell)
}

/// Right-hand side of the subspace perturbation inequality
/// `‖(I − UUᵀ) z₀‖² ≤ bound`, where `U` spans the top-ℓ singular vectors of
/// `m` and `Z = Σ pᵢ zᵢ zᵢᵀ`:
///
/// * `ℓ < k`: `(2(ℓ+1)‖M − Z‖ + maxⱼ‖zⱼ‖²) / ((ℓ+1) p₀)`
/// * `ℓ ≥ k`: `2‖M − Z‖ / p₀`
pub fn subspace_residual_bound(z: &[Vector], p: &[f64], m: &Matrix, ell: usize) -> Result<f64> {
    if z.is_empty() || z.len() != p.len() {
        return Err(Error::InvalidConfig("need one weight per vector".into()));
    }
    let d = m.nrows();
    if let Some(bad) = z.iter().find(|v| v.len() != d) {
        return Err(Error::DimensionMismatch { expected: d, got: bad.len() });
    }
    if p.iter().any(|&w| !(w >= 0.0)) {
        return Err(Error::InvalidConfig("weights must be nonnegative".into()));
    }
    let p0 = p[0];
    if p0 <= 0.0 {
        return Err(Error::TargetWeightZero);
    }
    let mut zmat = Matrix::zeros(d, d);
    for (zi, &pi) in z.iter().zip(p) {
        zmat.ger(pi, zi, zi, 1.0);
    }
    let gap = sym_spectral_norm(&(m - zmat));
    let k = z.len();
    if ell < k {
        let max_sq = z.iter().map(|v| v.norm_squared()).fold(0.0, f64::max);
        let l1 = (ell + 1) as f64;
        Ok((2.0 * l1 * gap + max_sq) / (l1 * p0))
    } else {
        Ok(2.0 * gap / p0)
    }
}
