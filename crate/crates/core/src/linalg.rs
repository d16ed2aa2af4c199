//! Small numeric helpers shared by the estimators.

use nalgebra::SymmetricEigen;

use crate::{Matrix, Vector};

/// Lower median: element at index `ceil(n/2) - 1` of the sorted values.
///
/// Returns `None` for an empty slice. NaNs sort last.
pub fn lower_median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.total_cmp(b));
    Some(sorted[values.len().div_ceil(2) - 1])
}

/// Sum of vectors by a fixed binary tree over the input order.
///
/// The tree shape depends only on `items.len()`, so the result is the same
/// however the items were produced.
pub fn pairwise_sum(items: &[Vector], dim: usize) -> Vector {
    match items.len() {
        0 => Vector::zeros(dim),
        1 => items[0].clone(),
        n => {
            let (lo, hi) = items.split_at(n / 2);
            pairwise_sum(lo, dim) + pairwise_sum(hi, dim)
        }
    }
}

/// Scalar counterpart of [`pairwise_sum`].
pub fn pairwise_sum_scalar(items: &[f64]) -> f64 {
    match items.len() {
        0 => 0.0,
        1 => items[0],
        n if n <= 8 => items.iter().sum(),
        n => {
            let (lo, hi) = items.split_at(n / 2);
            pairwise_sum_scalar(lo) + pairwise_sum_scalar(hi)
        }
    }
}

/// Eigenpairs of a symmetric matrix ordered by decreasing |eigenvalue|.
///
/// The input is symmetrized as `(a + aᵀ)/2` first. For a symmetric matrix
/// this ordering coincides with the singular-value ordering.
pub fn eigen_by_magnitude(a: &Matrix) -> (Vec<f64>, Matrix) {
    let sym = (a + a.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym);
    let n = eig.eigenvalues.len();
    let mut order: Vec<usize> = (0..n).collect();
    // stable sort keeps the solver's order among exact ties
    order.sort_by(|&i, &j| eig.eigenvalues[j].abs().total_cmp(&eig.eigenvalues[i].abs()));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = Matrix::from_fn(n, n, |r, c| eig.eigenvectors[(r, order[c])]);
    (values, vectors)
}

/// Spectral norm of a symmetric matrix (largest |eigenvalue|).
pub fn sym_spectral_norm(a: &Matrix) -> f64 {
    if a.is_empty() {
        return 0.0;
    }
    eigen_by_magnitude(a).0[0].abs()
}

/// Extends the orthonormal columns of `basis` to `target` columns.
///
/// Candidate directions are the standard basis vectors, taken in order and
/// Gram-Schmidt orthogonalized twice against the current columns.
pub fn orthonormal_completion(basis: &Matrix, target: usize) -> Matrix {
    let d = basis.nrows();
    let mut cols: Vec<Vector> = basis.column_iter().map(|c| c.into_owned()).collect();
    let mut e = 0;
    while cols.len() < target && e < d {
        let mut v = Vector::zeros(d);
        v[e] = 1.0;
        for _ in 0..2 {
            for c in &cols {
                let proj = c.dot(&v);
                v.axpy(-proj, c, 1.0);
            }
        }
        let norm = v.norm();
        if norm > 1e-8 {
            cols.push(v / norm);
        }
        e += 1;
    }
    Matrix::from_columns(&cols)
}
