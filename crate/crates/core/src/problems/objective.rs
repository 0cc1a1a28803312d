use std::fmt;
use std::sync::Arc;

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use super::libsvm::Dataset;
use crate::error::{OptError, Result};
use crate::linalg;

/// Anything with a value and a gradient.
pub trait Smooth {
    fn dim(&self) -> usize;
    fn value(&self, x: &Array1<f64>) -> f64;
    fn grad(&self, x: &Array1<f64>) -> Array1<f64>;
}

/// The components `f_1..f_n` of a finite sum.
pub trait ComponentFn: Send + Sync + fmt::Debug {
    fn n(&self) -> usize;
    fn dim(&self) -> usize;
    fn value_i(&self, i: usize, x: &Array1<f64>) -> f64;
    fn grad_i(&self, i: usize, x: &Array1<f64>) -> Array1<f64>;
    fn smoothness_i(&self, i: usize) -> f64;
    fn strong_convexity_i(&self, _i: usize) -> f64 {
        0.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObjectiveKind {
    LogisticL2,
    LeastSquaresL2,
    QuadraticDistance,
    Custom,
}

/// `f(x) = scale * (1/n) sum_k w_k g_{j_k}(x)` where `g` are the base
/// components. Plain objectives have `scale = 1` and unit weights; subsets
/// and importance resampling only rewrite the `(j_k, w_k)` map.
#[derive(Clone)]
pub struct FiniteSumObjective {
    pub kind: ObjectiveKind,
    base: Arc<dyn ComponentFn>,
    map: Vec<(usize, f64)>,
    scale: f64,
    l_i: Vec<f64>,
    l: f64,
    mu: f64,
}

impl fmt::Debug for FiniteSumObjective {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("FiniteSumObjective")
            .field("kind", &self.kind)
            .field("n", &self.n())
            .field("dim", &self.dim())
            .field("L", &self.l)
            .field("mu", &self.mu)
            .finish()
    }
}

impl FiniteSumObjective {
    /// Wrap arbitrary components. `l` and `mu` are the aggregate constants.
    pub fn custom(base: Arc<dyn ComponentFn>, l: f64, mu: f64) -> Result<Self> {
        Self::from_parts(ObjectiveKind::Custom, base, l, mu)
    }

    fn from_parts(kind: ObjectiveKind, base: Arc<dyn ComponentFn>, l: f64, mu: f64) -> Result<Self> {
        if !(mu >= 0.0) || !(l >= mu) {
            return Err(OptError::InvalidParameter(format!(
                "need 0 <= mu <= L, got mu={mu}, L={l}"
            )));
        }
        let n = base.n();
        let l_i = (0..n).map(|i| base.smoothness_i(i)).collect();
        Ok(FiniteSumObjective {
            kind,
            map: (0..n).map(|i| (i, 1.0)).collect(),
            base,
            scale: 1.0,
            l_i,
            l,
            mu,
        })
    }

    pub fn n(&self) -> usize {
        self.map.len()
    }

    pub fn dim(&self) -> usize {
        self.base.dim()
    }

    pub fn smoothness(&self) -> f64 {
        self.l
    }

    pub fn smoothness_i(&self, i: usize) -> f64 {
        self.l_i[i]
    }

    pub fn smoothness_all(&self) -> &[f64] {
        &self.l_i
    }

    pub fn max_smoothness(&self) -> f64 {
        self.l_i.iter().copied().fold(0.0, f64::max)
    }

    pub fn mean_smoothness(&self) -> f64 {
        self.l_i.iter().sum::<f64>() / self.n() as f64
    }

    pub fn strong_convexity(&self) -> f64 {
        self.mu
    }

    /// Outer factor in front of the component mean (1 unless resampled).
    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn value_i(&self, i: usize, x: &Array1<f64>) -> f64 {
        let (j, w) = self.map[i];
        w * self.base.value_i(j, x)
    }

    pub fn grad_i(&self, i: usize, x: &Array1<f64>) -> Array1<f64> {
        let (j, w) = self.map[i];
        let g = self.base.grad_i(j, x);
        if w == 1.0 {
            g
        } else {
            g * w
        }
    }

    /// `scale * ∇f_i(x)`, the unbiased single-sample estimate of `∇f(x)`.
    /// Identical to `grad_i` unless the objective was resampled.
    pub fn sample_grad(&self, i: usize, x: &Array1<f64>) -> Array1<f64> {
        let g = self.grad_i(i, x);
        if self.scale == 1.0 {
            g
        } else {
            g * self.scale
        }
    }

    pub fn value(&self, x: &Array1<f64>) -> f64 {
        let s: f64 = (0..self.n()).map(|i| self.value_i(i, x)).sum();
        self.scale * s / self.n() as f64
    }

    pub fn grad(&self, x: &Array1<f64>) -> Array1<f64> {
        let mut g = Array1::zeros(self.dim());
        for i in 0..self.n() {
            g += &self.grad_i(i, x);
        }
        g * (self.scale / self.n() as f64)
    }

    /// Bregman divergence of the whole objective, `D_f(x, y)`.
    pub fn bregman(&self, x: &Array1<f64>, y: &Array1<f64>) -> f64 {
        self.value(x) - self.value(y) - self.grad(y).dot(&(x - y))
    }

    /// Bregman divergence of component `i`.
    pub fn bregman_i(&self, i: usize, x: &Array1<f64>, y: &Array1<f64>) -> f64 {
        self.value_i(i, x) - self.value_i(i, y) - self.grad_i(i, y).dot(&(x - y))
    }

    /// Population variance of the component gradients at `x`.
    pub fn sigma_star(&self, x: &Array1<f64>) -> f64 {
        let g = self.grad(x) / self.scale;
        let s: f64 = (0..self.n()).map(|i| linalg::dist_sq(&self.grad_i(i, x), &g)).sum();
        s / self.n() as f64
    }

    /// The components listed in `idx` as a new objective (shards, batches).
    /// Aggregate constants are the averages of the component constants,
    /// which bound the true ones from the safe side.
    pub fn subset(&self, idx: &[usize]) -> FiniteSumObjective {
        assert!(!idx.is_empty(), "empty subset");
        let map: Vec<(usize, f64)> = idx.iter().map(|&i| self.map[i]).collect();
        let l_i: Vec<f64> = idx.iter().map(|&i| self.l_i[i]).collect();
        let k = idx.len() as f64;
        let l = l_i.iter().sum::<f64>() / k;
        let mu = idx
            .iter()
            .map(|&i| {
                let (j, w) = self.map[i];
                w * self.base.strong_convexity_i(j)
            })
            .sum::<f64>()
            / k;
        FiniteSumObjective {
            kind: self.kind,
            base: self.base.clone(),
            map,
            scale: self.scale,
            l_i,
            l,
            mu: mu.min(l),
        }
    }

    pub(crate) fn reweighted(&self, map: Vec<(usize, f64)>, scale: f64) -> FiniteSumObjective {
        let l_i = map.iter().map(|&(j, w)| w * self.base.smoothness_i(j)).collect();
        FiniteSumObjective {
            kind: self.kind,
            base: self.base.clone(),
            map,
            scale,
            l_i,
            l: self.l,
            mu: self.mu,
        }
    }

    pub(crate) fn map(&self) -> &[(usize, f64)] {
        &self.map
    }
}

impl Smooth for FiniteSumObjective {
    fn dim(&self) -> usize {
        FiniteSumObjective::dim(self)
    }
    fn value(&self, x: &Array1<f64>) -> f64 {
        FiniteSumObjective::value(self, x)
    }
    fn grad(&self, x: &Array1<f64>) -> Array1<f64> {
        FiniteSumObjective::grad(self, x)
    }
}

/// `h(t) = 1/(1+e^{-t})` without overflow.
pub fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

const LOG_FLOOR: f64 = 1e-300;

#[derive(Debug)]
struct Logistic {
    a: Array2<f64>,
    b: Array1<f64>,
    lambda2: f64,
}

impl ComponentFn for Logistic {
    fn n(&self) -> usize {
        self.a.nrows()
    }
    fn dim(&self) -> usize {
        self.a.ncols()
    }
    fn value_i(&self, i: usize, x: &Array1<f64>) -> f64 {
        let t = self.a.row(i).dot(x);
        let b = self.b[i];
        let lp = sigmoid(t).max(LOG_FLOOR).ln();
        let lq = sigmoid(-t).max(LOG_FLOOR).ln();
        -(b * lp + (1.0 - b) * lq) + 0.5 * self.lambda2 * x.dot(x)
    }
    fn grad_i(&self, i: usize, x: &Array1<f64>) -> Array1<f64> {
        let row = self.a.row(i);
        let c = sigmoid(row.dot(x)) - self.b[i];
        let mut g = &row * c;
        if self.lambda2 != 0.0 {
            g.scaled_add(self.lambda2, x);
        }
        g
    }
    fn smoothness_i(&self, i: usize) -> f64 {
        let r = self.a.row(i);
        r.dot(&r) / 4.0 + self.lambda2
    }
    fn strong_convexity_i(&self, _i: usize) -> f64 {
        self.lambda2
    }
}

/// Regularized logistic regression on a dataset with labels in {0,1}.
pub fn make_logistic(ds: &Dataset, lambda2: f64) -> Result<FiniteSumObjective> {
    if ds.n_samples() == 0 {
        return Err(OptError::InvalidParameter("empty dataset".into()));
    }
    if !(lambda2 >= 0.0) {
        return Err(OptError::InvalidParameter(format!("lambda2 = {lambda2}")));
    }
    if let Some(bad) = ds.labels.iter().find(|&&l| l != 0.0 && l != 1.0) {
        return Err(OptError::Domain(format!("logistic label {bad} not in {{0,1}}")));
    }
    let a = ds.to_dense();
    let n = a.nrows() as f64;
    let norm_a = linalg::spectral_norm_dense(&a);
    let l = norm_a * norm_a / (4.0 * n) + lambda2;
    let b = Array1::from(ds.labels.clone());
    FiniteSumObjective::from_parts(
        ObjectiveKind::LogisticL2,
        Arc::new(Logistic { a, b, lambda2 }),
        l,
        lambda2,
    )
}

#[derive(Debug)]
struct LeastSquares {
    a: Array2<f64>,
    b: Array1<f64>,
    lambda2: f64,
}

impl ComponentFn for LeastSquares {
    fn n(&self) -> usize {
        self.a.nrows()
    }
    fn dim(&self) -> usize {
        self.a.ncols()
    }
    fn value_i(&self, i: usize, x: &Array1<f64>) -> f64 {
        let r = self.a.row(i).dot(x) - self.b[i];
        0.5 * r * r + 0.5 * self.lambda2 * x.dot(x)
    }
    fn grad_i(&self, i: usize, x: &Array1<f64>) -> Array1<f64> {
        let row = self.a.row(i);
        let mut g = &row * (row.dot(x) - self.b[i]);
        if self.lambda2 != 0.0 {
            g.scaled_add(self.lambda2, x);
        }
        g
    }
    fn smoothness_i(&self, i: usize) -> f64 {
        let r = self.a.row(i);
        r.dot(&r) + self.lambda2
    }
    fn strong_convexity_i(&self, _i: usize) -> f64 {
        self.lambda2
    }
}

/// `f_i(x) = (a_i^T x - b_i)^2 / 2 + lambda2/2 |x|^2`.
pub fn make_least_squares(a: Array2<f64>, b: Array1<f64>, lambda2: f64) -> Result<FiniteSumObjective> {
    if a.nrows() != b.len() || a.nrows() == 0 {
        return Err(OptError::Dimension(format!(
            "A is {}x{}, b has {}",
            a.nrows(),
            a.ncols(),
            b.len()
        )));
    }
    let n = a.nrows() as f64;
    let gram = a.t().dot(&a) / n;
    let eig = linalg::sym_eigenvalues(&gram);
    let l = eig.last().copied().unwrap_or(0.0).max(0.0) + lambda2;
    let mu = eig[0].max(0.0) + lambda2;
    FiniteSumObjective::from_parts(
        ObjectiveKind::LeastSquaresL2,
        Arc::new(LeastSquares { a, b, lambda2 }),
        l,
        mu.min(l),
    )
}

#[derive(Debug)]
struct QuadDistance {
    x0: Array1<f64>,
}

impl ComponentFn for QuadDistance {
    fn n(&self) -> usize {
        1
    }
    fn dim(&self) -> usize {
        self.x0.len()
    }
    fn value_i(&self, _i: usize, x: &Array1<f64>) -> f64 {
        0.5 * linalg::dist_sq(x, &self.x0)
    }
    fn grad_i(&self, _i: usize, x: &Array1<f64>) -> Array1<f64> {
        x - &self.x0
    }
    fn smoothness_i(&self, _i: usize) -> f64 {
        1.0
    }
    fn strong_convexity_i(&self, _i: usize) -> f64 {
        1.0
    }
}

/// `f(x) = |x - x0|^2 / 2` as a single component.
pub fn make_quadratic_distance(x0: Array1<f64>) -> FiniteSumObjective {
    FiniteSumObjective::from_parts(
        ObjectiveKind::QuadraticDistance,
        Arc::new(QuadDistance { x0 }),
        1.0,
        1.0,
    )
    .expect("constants are valid")
}

/// Components `f_i(x) = (x - c_i)^T H_i (x - c_i) / 2` with PSD `H_i`.
#[derive(Debug)]
pub struct QuadraticComponents {
    hessians: Vec<Array2<f64>>,
    centers: Vec<Array1<f64>>,
    l_i: Vec<f64>,
    mu_i: Vec<f64>,
}

impl ComponentFn for QuadraticComponents {
    fn n(&self) -> usize {
        self.hessians.len()
    }
    fn dim(&self) -> usize {
        self.centers[0].len()
    }
    fn value_i(&self, i: usize, x: &Array1<f64>) -> f64 {
        let r = x - &self.centers[i];
        0.5 * r.dot(&self.hessians[i].dot(&r))
    }
    fn grad_i(&self, i: usize, x: &Array1<f64>) -> Array1<f64> {
        self.hessians[i].dot(&(x - &self.centers[i]))
    }
    fn smoothness_i(&self, i: usize) -> f64 {
        self.l_i[i]
    }
    fn strong_convexity_i(&self, i: usize) -> f64 {
        self.mu_i[i]
    }
}

pub fn make_quadratic_sum(hessians: Vec<Array2<f64>>, centers: Vec<Array1<f64>>) -> Result<FiniteSumObjective> {
    if hessians.is_empty() || hessians.len() != centers.len() {
        return Err(OptError::Dimension("need one center per Hessian".into()));
    }
    let d = centers[0].len();
    for (h, c) in hessians.iter().zip(&centers) {
        if h.dim() != (d, d) || c.len() != d {
            return Err(OptError::Dimension("inconsistent quadratic shapes".into()));
        }
    }
    let mut l_i = Vec::new();
    let mut mu_i = Vec::new();
    let mut mean = Array2::zeros((d, d));
    for h in &hessians {
        let e = linalg::sym_eigenvalues(h);
        if e[0] < -1e-12 * e[d - 1].abs().max(1.0) {
            return Err(OptError::Domain("Hessian is not positive semidefinite".into()));
        }
        mu_i.push(e[0].max(0.0));
        l_i.push(e[d - 1].max(0.0));
        mean += h;
    }
    mean /= hessians.len() as f64;
    let e = linalg::sym_eigenvalues(&mean);
    let comps = QuadraticComponents {
        hessians,
        centers,
        l_i,
        mu_i,
    };
    FiniteSumObjective::custom(Arc::new(comps), e[d - 1].max(0.0), e[0].max(0.0).min(e[d - 1].max(0.0)))
}

#[derive(Debug)]
struct LinearComponents {
    c: Vec<Array1<f64>>,
}

impl ComponentFn for LinearComponents {
    fn n(&self) -> usize {
        self.c.len()
    }
    fn dim(&self) -> usize {
        self.c[0].len()
    }
    fn value_i(&self, i: usize, x: &Array1<f64>) -> f64 {
        self.c[i].dot(x)
    }
    fn grad_i(&self, i: usize, _x: &Array1<f64>) -> Array1<f64> {
        self.c[i].clone()
    }
    fn smoothness_i(&self, _i: usize) -> f64 {
        0.0
    }
}

/// Linear components `f_i(x) = <c_i, x>`; only meaningful with a
/// strongly convex regularizer.
pub fn make_linear_sum(c: Vec<Array1<f64>>) -> Result<FiniteSumObjective> {
    if c.is_empty() || c.iter().any(|v| v.len() != c[0].len()) {
        return Err(OptError::Dimension("need equal-length coefficient vectors".into()));
    }
    FiniteSumObjective::custom(Arc::new(LinearComponents { c }), 0.0, 0.0)
}

/// A smooth function given by closures.
pub struct FnSmooth<V, G> {
    pub dim: usize,
    pub value: V,
    pub grad: G,
}

impl<V, G> Smooth for FnSmooth<V, G>
where
    V: Fn(&Array1<f64>) -> f64,
    G: Fn(&Array1<f64>) -> Array1<f64>,
{
    fn dim(&self) -> usize {
        self.dim
    }
    fn value(&self, x: &Array1<f64>) -> f64 {
        (self.value)(x)
    }
    fn grad(&self, x: &Array1<f64>) -> Array1<f64> {
        (self.grad)(x)
    }
}
