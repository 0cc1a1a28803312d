use ndarray::{Array1, Array2};
use rand::Rng as _;
use rand_distr::{Distribution, Normal, StandardNormal};

use super::libsvm::Dataset;
use crate::rng::RngStream;

/// Random positive definite system `W x* = b` with
/// `W = M M^T + 1e-2 I`, `M_ij ~ N(0, 1/sqrt(d))`.
pub fn gaussian_system(d: usize, rng: &RngStream) -> (Array2<f64>, Array1<f64>, Array1<f64>) {
    assert!(d >= 1, "gaussian_system needs d >= 1");
    let mut r = rng.rng();
    let normal = Normal::new(0.0, 1.0 / (d as f64).sqrt()).unwrap();
    let m = Array2::from_shape_fn((d, d), |_| normal.sample(&mut r));
    let mut w = m.dot(&m.t());
    for i in 0..d {
        w[[i, i]] += 1e-2;
    }
    // exact symmetry regardless of summation order
    for i in 0..d {
        for j in 0..i {
            let v = w[[i, j]];
            w[[j, i]] = v;
        }
    }
    let x_star: Array1<f64> = (0..d).map(|_| StandardNormal.sample(&mut r)).collect();
    let b = w.dot(&x_star);
    (w, b, x_star)
}

pub fn gaussian_matrix(rows: usize, cols: usize, rng: &RngStream) -> Array2<f64> {
    let mut r = rng.rng();
    Array2::from_shape_fn((rows, cols), |_| StandardNormal.sample(&mut r))
}

pub fn gaussian_vector(d: usize, rng: &RngStream) -> Array1<f64> {
    let mut r = rng.rng();
    (0..d).map(|_| StandardNormal.sample(&mut r)).collect()
}

/// Binary classification data from a planted logistic model.
/// With `sorted`, rows are ordered by label (useful for heterogeneous
/// contiguous splits).
pub fn synthetic_classification(n: usize, d: usize, sorted: bool, rng: &RngStream) -> Dataset {
    let mut r = rng.child("features").rng();
    let w: Array1<f64> = (0..d).map(|_| StandardNormal.sample(&mut r)).collect();
    let a = Array2::from_shape_fn((n, d), |_| -> f64 { StandardNormal.sample(&mut r) });
    let mut lr = rng.child("labels").rng();
    let mut labels: Vec<f64> = a
        .rows()
        .into_iter()
        .map(|row| {
            let p = super::objective::sigmoid(row.dot(&w));
            if lr.random::<f64>() < p {
                1.0
            } else {
                0.0
            }
        })
        .collect();
    let mut a = a;
    if sorted {
        let mut idx: Vec<usize> = (0..n).collect();
        idx.sort_by(|&i, &j| labels[i].partial_cmp(&labels[j]).unwrap().then(i.cmp(&j)));
        let a2 = Array2::from_shape_fn((n, d), |(i, j)| a[[idx[i], j]]);
        labels = idx.iter().map(|&i| labels[i]).collect();
        a = a2;
    }
    Dataset::from_dense(&a, labels).expect("consistent shapes")
}

/// First-difference matrix `D` of shape `(d-1) x d`: `D_ii = 1`, `D_i,i+1 = -1`.
pub fn fused_difference(d: usize) -> Array2<f64> {
    assert!(d >= 2, "fused_difference needs d >= 2");
    let mut m = Array2::zeros((d - 1, d));
    for i in 0..d - 1 {
        m[[i, i]] = 1.0;
        m[[i, i + 1]] = -1.0;
    }
    m
}

/// Eigenvalues `2 - 2 cos(k pi / d)`, `k = 1..d-1`, of `D D^T`, ascending.
pub fn fused_spectrum(d: usize) -> Vec<f64> {
    (1..d)
        .map(|k| 2.0 - 2.0 * (k as f64 * std::f64::consts::PI / d as f64).cos())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg;

    #[test]
    fn gaussian_system_is_consistent() {
        let (w, b, x) = gaussian_system(20, &RngStream::new(1));
        assert!(linalg::norm(&(w.dot(&x) - &b)) <= 1e-12 * (1.0 + linalg::norm(&b)));
        for i in 0..20 {
            for j in 0..20 {
                assert!((w[[i, j]] - w[[j, i]]).abs() <= 1e-14);
            }
        }
    }

    #[test]
    fn gaussian_system_min_eigenvalue() {
        for d in [1, 5, 50] {
            let (w, _, _) = gaussian_system(d, &RngStream::new(d as u64));
            let e = linalg::sym_eigenvalues(&w);
            assert!(e[0] >= 1e-2 - 1e-9, "d={d}: {}", e[0]);
        }
    }

    #[test]
    fn fused_matrix_shape() {
        let m = fused_difference(4);
        assert_eq!(m.dim(), (3, 4));
        assert_eq!(m.row(1).to_vec(), vec![0.0, 1.0, -1.0, 0.0]);
    }

    #[test]
    fn fused_spectrum_matches_dense() {
        for d in [2, 4, 10] {
            let m = fused_difference(d);
            let e = linalg::sym_eigenvalues(&m.dot(&m.t()));
            for (a, b) in e.iter().zip(fused_spectrum(d)) {
                assert!((a - b).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn sorted_classification() {
        let ds = synthetic_classification(40, 3, true, &RngStream::new(2));
        assert!(ds.labels.windows(2).all(|w| w[0] <= w[1]));
        assert_eq!(ds.n_samples(), 40);
    }
}
