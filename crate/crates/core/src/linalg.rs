//! Small dense helpers shared by the solvers. Dense factorizations go
//! through nalgebra; everything on the hot path stays in ndarray.

use nalgebra::{DMatrix, DVector};
use ndarray::{Array1, Array2};
use rand_distr::{Distribution, StandardNormal};

use crate::rng::RngStream;

pub fn norm(x: &Array1<f64>) -> f64 {
    x.dot(x).sqrt()
}

pub fn norm_sq(x: &Array1<f64>) -> f64 {
    x.dot(x)
}

pub fn dist_sq(a: &Array1<f64>, b: &Array1<f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(u, v)| (u - v) * (u - v)).sum()
}

pub fn to_na(a: &Array2<f64>) -> DMatrix<f64> {
    DMatrix::from_fn(a.nrows(), a.ncols(), |i, j| a[[i, j]])
}

pub fn vec_to_na(x: &Array1<f64>) -> DVector<f64> {
    DVector::from_iterator(x.len(), x.iter().copied())
}

pub fn from_na(v: &DVector<f64>) -> Array1<f64> {
    Array1::from_iter(v.iter().copied())
}

/// Eigenvalues of a symmetric matrix, ascending.
pub fn sym_eigenvalues(a: &Array2<f64>) -> Vec<f64> {
    let eig = nalgebra::SymmetricEigen::new(to_na(a));
    let mut v: Vec<f64> = eig.eigenvalues.iter().copied().collect();
    v.sort_by(|x, y| x.partial_cmp(y).unwrap());
    v
}

/// Singular values, descending.
pub fn singular_values(a: &Array2<f64>) -> Vec<f64> {
    let svd = nalgebra::SVD::new(to_na(a), false, false);
    let mut v: Vec<f64> = svd.singular_values.iter().copied().collect();
    v.sort_by(|x, y| y.partial_cmp(x).unwrap());
    v
}

/// Solve `a x = b` for square `a`; `None` if singular.
pub fn solve(a: &Array2<f64>, b: &Array1<f64>) -> Option<Array1<f64>> {
    to_na(a).lu().solve(&vec_to_na(b)).map(|x| from_na(&x))
}

/// Eigenpairs of a symmetric matrix, eigenvalues ascending, eigenvectors
/// as the matching columns.
pub fn sym_eigen(a: &Array2<f64>) -> (Vec<f64>, Array2<f64>) {
    let eig = nalgebra::SymmetricEigen::new(to_na(a));
    let n = a.nrows();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].partial_cmp(&eig.eigenvalues[j]).unwrap());
    let vals = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vecs = Array2::from_shape_fn((n, n), |(r, c)| eig.eigenvectors[(r, order[c])]);
    (vals, vecs)
}

/// Relative eigenvalue cutoff of `a a^T` below which a direction counts as
/// outside the range.
pub const RANGE_TOL: f64 = 1e-12;

/// Orthonormal basis of `Range(a)` from the eigenvectors of `a a^T`.
// nalgebra's SVD returns inconsistent singular vectors on some
// rank-deficient inputs, so the symmetric eigensolver is used instead.
pub fn range_basis(a: &Array2<f64>) -> Array2<f64> {
    let (vals, vecs) = sym_eigen(&a.dot(&a.t()));
    let top = vals.last().copied().unwrap_or(0.0).max(0.0);
    let keep: Vec<usize> = (0..vals.len())
        .filter(|&i| top > 0.0 && vals[i] > RANGE_TOL * top)
        .collect();
    Array2::from_shape_fn((a.nrows(), keep.len()), |(r, c)| vecs[[r, keep[c]]])
}

/// Distance from `v` to `Range(a)`.
pub fn range_residual(a: &Array2<f64>, v: &Array1<f64>) -> f64 {
    let q = range_basis(a);
    norm(&(v - &q.dot(&q.t().dot(v))))
}

pub const POWER_TOL: f64 = 1e-10;
pub const POWER_MAX_ITER: usize = 1000;

/// Spectral norm of a linear map given by `apply` (R^n -> R^m) and its
/// adjoint, by power iteration on `A^T A`. Deterministic start vector.
pub fn power_iteration<F, G>(apply: F, adjoint: G, n: usize, seed: u64) -> f64
where
    F: Fn(&Array1<f64>) -> Array1<f64>,
    G: Fn(&Array1<f64>) -> Array1<f64>,
{
    if n == 0 {
        return 0.0;
    }
    let mut rng = RngStream::with_label(seed, "power_iteration").rng();
    let mut v: Array1<f64> = (0..n).map(|_| StandardNormal.sample(&mut rng)).collect();
    let nv = norm(&v);
    v /= nv;
    let mut sigma = 0.0;
    for _ in 0..POWER_MAX_ITER {
        let av = apply(&v);
        let s = norm(&av);
        if s == 0.0 {
            return 0.0;
        }
        let w = adjoint(&av);
        let nw = norm(&w);
        if nw == 0.0 {
            return s;
        }
        v = w / nw;
        let converged = (s - sigma).abs() <= POWER_TOL * s;
        sigma = s;
        if converged {
            break;
        }
    }
    sigma
}

pub fn spectral_norm_dense(a: &Array2<f64>) -> f64 {
    power_iteration(|x| a.dot(x), |y| a.t().dot(y), a.ncols(), 0)
}
