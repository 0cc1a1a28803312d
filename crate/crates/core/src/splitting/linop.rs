use ndarray::{s, Array1, Array2};

use crate::error::{OptError, Result};
use crate::linalg;

/// Linear maps `L: R^cols -> R^rows` used by the primal-dual solvers.
#[derive(Clone, Debug, PartialEq)]
pub enum LinOp {
    Dense(Array2<f64>),
    /// First differences on `R^d`: `(Dx)_i = x_i - x_{i+1}`, shape `(d-1) x d`.
    Difference(usize),
    Identity(usize),
    Zero {
        rows: usize,
        cols: usize,
    },
    /// `W ⊗ I_d` acting on `N` stacked blocks of size `d`.
    Kron {
        w: Array2<f64>,
        d: usize,
    },
}

impl LinOp {
    pub fn rows(&self) -> usize {
        match self {
            LinOp::Dense(a) => a.nrows(),
            LinOp::Difference(d) => d.saturating_sub(1),
            LinOp::Identity(d) => *d,
            LinOp::Zero { rows, .. } => *rows,
            LinOp::Kron { w, d } => w.nrows() * d,
        }
    }

    pub fn cols(&self) -> usize {
        match self {
            LinOp::Dense(a) => a.ncols(),
            LinOp::Difference(d) => *d,
            LinOp::Identity(d) => *d,
            LinOp::Zero { cols, .. } => *cols,
            LinOp::Kron { w, d } => w.ncols() * d,
        }
    }

    pub fn is_zero(&self) -> bool {
        matches!(self, LinOp::Zero { .. })
    }

    pub fn apply(&self, x: &Array1<f64>) -> Array1<f64> {
        debug_assert_eq!(x.len(), self.cols(), "operator input dimension");
        match self {
            LinOp::Dense(a) => a.dot(x),
            LinOp::Difference(d) => Array1::from_shape_fn(d.saturating_sub(1), |i| x[i] - x[i + 1]),
            LinOp::Identity(_) => x.clone(),
            LinOp::Zero { rows, .. } => Array1::zeros(*rows),
            LinOp::Kron { w, d } => kron_apply(w, *d, x),
        }
    }

    pub fn adjoint(&self, y: &Array1<f64>) -> Array1<f64> {
        debug_assert_eq!(y.len(), self.rows(), "operator output dimension");
        match self {
            LinOp::Dense(a) => a.t().dot(y),
            LinOp::Difference(d) => {
                let d = *d;
                Array1::from_shape_fn(d, |j| {
                    let up = if j + 1 < d { y[j] } else { 0.0 };
                    let down = if j > 0 { y[j - 1] } else { 0.0 };
                    up - down
                })
            }
            LinOp::Identity(_) => y.clone(),
            LinOp::Zero { cols, .. } => Array1::zeros(*cols),
            LinOp::Kron { w, d } => kron_apply(&w.t().to_owned(), *d, y),
        }
    }

    pub fn to_dense(&self) -> Array2<f64> {
        let n = self.cols();
        let mut out = Array2::zeros((self.rows(), n));
        for j in 0..n {
            let mut e = Array1::zeros(n);
            e[j] = 1.0;
            out.column_mut(j).assign(&self.apply(&e));
        }
        out
    }

    /// `L^* L` as an operator on the primal space.
    pub fn gram(&self) -> LinOp {
        match self {
            LinOp::Identity(d) => LinOp::Identity(*d),
            LinOp::Zero { cols, .. } => LinOp::Zero {
                rows: *cols,
                cols: *cols,
            },
            LinOp::Kron { w, d } => LinOp::Kron { w: w.t().dot(w), d: *d },
            LinOp::Dense(a) => LinOp::Dense(a.t().dot(a)),
            LinOp::Difference(_) => {
                let a = self.to_dense();
                LinOp::Dense(a.t().dot(&a))
            }
        }
    }
}

fn kron_apply(w: &Array2<f64>, d: usize, x: &Array1<f64>) -> Array1<f64> {
    let mut out = Array1::zeros(w.nrows() * d);
    for i in 0..w.nrows() {
        let mut blk = out.slice_mut(s![i * d..(i + 1) * d]);
        for j in 0..w.ncols() {
            let c = w[[i, j]];
            if c != 0.0 {
                blk.scaled_add(c, &x.slice(s![j * d..(j + 1) * d]));
            }
        }
    }
    out
}

/// `‖L‖` by power iteration on `L^* L` (relative tolerance 1e-10).
pub fn spectral_norm(op: &LinOp) -> f64 {
    match op {
        LinOp::Zero { .. } => 0.0,
        LinOp::Identity(d) => {
            if *d == 0 {
                0.0
            } else {
                1.0
            }
        }
        _ => linalg::power_iteration(|x| op.apply(x), |y| op.adjoint(y), op.cols(), 0),
    }
}

/// Graph Laplacian of an undirected edge list on `nodes` vertices.
/// Fails on self-loops, out-of-range endpoints and disconnected graphs.
pub fn laplacian(nodes: usize, edges: &[(usize, usize)]) -> Result<Array2<f64>> {
    if nodes == 0 {
        return Err(OptError::InvalidParameter("graph has no nodes".into()));
    }
    let mut lap = Array2::zeros((nodes, nodes));
    for &(i, j) in edges {
        if i >= nodes || j >= nodes {
            return Err(OptError::InvalidParameter(format!(
                "edge ({i}, {j}) out of range for {nodes} nodes"
            )));
        }
        if i == j {
            return Err(OptError::InvalidParameter(format!("self-loop at node {i}")));
        }
        if lap[[i, j]] != 0.0 {
            continue;
        }
        lap[[i, j]] = -1.0;
        lap[[j, i]] = -1.0;
        lap[[i, i]] += 1.0;
        lap[[j, j]] += 1.0;
    }
    // breadth-first search from node 0
    let mut seen = vec![false; nodes];
    let mut queue = std::collections::VecDeque::from([0usize]);
    seen[0] = true;
    while let Some(u) = queue.pop_front() {
        for v in 0..nodes {
            if !seen[v] && lap[[u, v]] != 0.0 {
                seen[v] = true;
                queue.push_back(v);
            }
        }
    }
    if let Some(v) = seen.iter().position(|s| !s) {
        return Err(OptError::DisconnectedGraph(v));
    }
    Ok(lap)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::{fused_difference, fused_spectrum};
    use crate::rng::RngStream;
    use proptest::prelude::*;

    #[test]
    fn identity_and_diag() {
        assert_eq!(spectral_norm(&LinOp::Identity(5)), 1.0);
        let a = ndarray::arr2(&[[3.0, 0.0], [0.0, 1.0]]);
        assert!((spectral_norm(&LinOp::Dense(a)) - 3.0).abs() <= 1e-9);
        assert_eq!(spectral_norm(&LinOp::Zero { rows: 2, cols: 3 }), 0.0);
    }

    #[test]
    fn fused_difference_norm_d4() {
        let n = spectral_norm(&LinOp::Difference(4));
        let want = 2.0 + 2f64.sqrt();
        assert!((n * n - want).abs() <= 1e-8 * want, "{} vs {want}", n * n);
    }

    #[test]
    fn difference_matches_dense() {
        for d in [2, 3, 7] {
            assert_eq!(LinOp::Difference(d).to_dense(), fused_difference(d));
        }
    }

    #[test]
    fn fused_spectrum_matches_eigenvalues() {
        for d in [4, 10, 50] {
            let dm = fused_difference(d);
            let ev = linalg::sym_eigenvalues(&dm.dot(&dm.t()));
            for (a, b) in ev.iter().zip(fused_spectrum(d)) {
                assert!((a - b).abs() <= 1e-9);
            }
        }
    }

    #[test]
    fn laplacian_rejects_disconnected() {
        assert!(matches!(
            laplacian(4, &[(0, 1), (2, 3)]),
            Err(OptError::DisconnectedGraph(2))
        ));
        assert!(laplacian(2, &[(0, 0)]).is_err());
        let l = laplacian(3, &[(0, 1), (1, 2)]).unwrap();
        assert_eq!(l.sum_axis(ndarray::Axis(1)), Array1::<f64>::zeros(3));
    }

    proptest! {
        #[test]
        fn adjoint_identity(seed in 0u64..500, kind in 0usize..3) {
            let s = RngStream::new(seed);
            let op = match kind {
                0 => LinOp::Dense(crate::problems::gaussian_matrix(4, 6, &s)),
                1 => LinOp::Difference(6),
                _ => LinOp::Kron { w: laplacian(3, &[(0, 1), (1, 2)]).unwrap(), d: 2 },
            };
            let x = crate::problems::gaussian_vector(op.cols(), &s.child("x"));
            let y = crate::problems::gaussian_vector(op.rows(), &s.child("y"));
            let lhs = op.apply(&x).dot(&y);
            let rhs = x.dot(&op.adjoint(&y));
            prop_assert!((lhs - rhs).abs() <= 1e-12 * (1.0 + lhs.abs()));
            let n = spectral_norm(&op);
            let dense = linalg::singular_values(&op.to_dense()).into_iter().fold(0.0, f64::max);
            prop_assert!((n - dense).abs() <= 1e-8 * (1.0 + dense));
        }
    }
}
