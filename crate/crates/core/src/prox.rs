//! Exact proximal operators `prox_{γψ}(x) = argmin_u γψ(u) + |u - x|^2 / 2`.

use std::fmt;
use std::sync::Arc;

use ndarray::{s, Array1, Array2};

use crate::error::{OptError, Result};
use crate::linalg;
use crate::problems::Smooth;

/// Feasibility slack used when evaluating indicator terms.
const FEAS_TOL: f64 = 1e-9;

pub type ScalarFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// Scalar convex functions that can be composed with a linear map.
#[derive(Clone)]
pub enum Phi {
    /// `λ|s|`
    Abs(f64),
    /// `max{0, 1 - s}`
    Hinge,
    /// indicator of `[lo, hi]`
    Interval(f64, f64),
    /// indicator of `{c}`; the only choice allowed with several columns
    Point(Array1<f64>),
    /// any convex `φ` given with its derivative; prox by bisection
    Smooth { value: ScalarFn, deriv: ScalarFn },
}

impl fmt::Debug for Phi {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Phi::Abs(l) => write!(f, "Abs({l})"),
            Phi::Hinge => write!(f, "Hinge"),
            Phi::Interval(a, b) => write!(f, "Interval({a}, {b})"),
            Phi::Point(c) => write!(f, "Point({c})"),
            Phi::Smooth { .. } => write!(f, "Smooth"),
        }
    }
}

const BISECTION_TOL: f64 = 1e-12;

impl Phi {
    fn value(&self, s: f64) -> f64 {
        match self {
            Phi::Abs(l) => l * s.abs(),
            Phi::Hinge => (1.0 - s).max(0.0),
            Phi::Interval(a, b) => {
                if s >= a - FEAS_TOL && s <= b + FEAS_TOL {
                    0.0
                } else {
                    f64::INFINITY
                }
            }
            Phi::Point(c) => {
                if (s - c[0]).abs() <= FEAS_TOL * (1.0 + c[0].abs()) {
                    0.0
                } else {
                    f64::INFINITY
                }
            }
            Phi::Smooth { value, .. } => value(s),
        }
    }

    /// `prox_{cφ}(v)` in one dimension.
    fn prox_1d(&self, c: f64, v: f64) -> f64 {
        match self {
            Phi::Abs(l) => soft(v, c * l),
            Phi::Hinge => {
                if v >= 1.0 {
                    v
                } else if v <= 1.0 - c {
                    v + c
                } else {
                    1.0
                }
            }
            Phi::Interval(a, b) => v.clamp(*a, *b),
            Phi::Point(p) => p[0],
            Phi::Smooth { deriv, .. } => {
                let g = |t: f64| t - v + c * deriv(t);
                let (mut lo, mut hi) = (v - 1.0, v + 1.0);
                let mut w = 1.0;
                while g(lo) > 0.0 {
                    w *= 2.0;
                    lo = v - w;
                }
                w = 1.0;
                while g(hi) < 0.0 {
                    w *= 2.0;
                    hi = v + w;
                }
                while hi - lo > BISECTION_TOL * hi.abs().max(lo.abs()).max(1.0) {
                    let mid = 0.5 * (lo + hi);
                    if g(mid) > 0.0 {
                        hi = mid;
                    } else {
                        lo = mid;
                    }
                }
                0.5 * (lo + hi)
            }
        }
    }
}

#[derive(Clone, Debug)]
pub enum ProxKind {
    Zero,
    /// `λ|x|_1`
    L1 {
        lambda: f64,
    },
    /// `λ/2 |x|^2`
    SqNorm {
        lambda: f64,
    },
    /// `λ1 |x|_1 + λ2/2 |x|^2`
    Elastic {
        l1: f64,
        l2: f64,
    },
    /// `λ Σ_g |x_g|` over disjoint groups
    GroupL2 {
        groups: Vec<Vec<usize>>,
        lambda: f64,
    },
    /// `max{0, 1 - b a^T x}` with `b = ±1`
    Hinge {
        a: Array1<f64>,
        b: f64,
    },
    /// indicator of `{x : a^T x = b}`
    Hyperplane {
        a: Array1<f64>,
        b: f64,
    },
    /// indicator of `{x : |c^T x - e| <= λ}`, one row of a Dantzig constraint
    BoxDantzig {
        c: Array1<f64>,
        e: f64,
        lambda: f64,
    },
    /// indicator of `[lo, hi]^d`
    Box {
        lo: f64,
        hi: f64,
    },
    /// indicator of the single point `b`
    Point {
        b: Array1<f64>,
    },
    /// `R(x_1) + ι{x_1 = ... = x_M}` on the stacked vector of `M` blocks
    Consensus {
        workers: usize,
        inner: Box<ProxTerm>,
    },
    /// `φ(A^T x)` with full column rank `A`
    LinearComp {
        a: Array2<f64>,
        gram: Array2<f64>,
        phi: Phi,
    },
    /// `λ1 |x|_1 + λ2 Σ_i |x_{i+1} - x_i|`
    FusedLasso {
        l1: f64,
        l2: f64,
    },
}

#[derive(Clone, Debug)]
pub struct ProxTerm {
    kind: ProxKind,
}

fn check_nonneg(name: &str, v: f64) -> Result<()> {
    if v >= 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(OptError::InvalidParameter(format!("{name} = {v}")))
    }
}

impl ProxTerm {
    pub fn kind(&self) -> &ProxKind {
        &self.kind
    }

    pub fn zero() -> Self {
        ProxTerm { kind: ProxKind::Zero }
    }

    pub fn l1(lambda: f64) -> Result<Self> {
        check_nonneg("lambda", lambda)?;
        Ok(ProxTerm {
            kind: ProxKind::L1 { lambda },
        })
    }

    pub fn sqnorm(lambda: f64) -> Result<Self> {
        check_nonneg("lambda", lambda)?;
        Ok(ProxTerm {
            kind: ProxKind::SqNorm { lambda },
        })
    }

    pub fn elastic(l1: f64, l2: f64) -> Result<Self> {
        check_nonneg("lambda1", l1)?;
        check_nonneg("lambda2", l2)?;
        Ok(ProxTerm {
            kind: ProxKind::Elastic { l1, l2 },
        })
    }

    /// Group lasso over disjoint groups. Overlapping groups must be split
    /// into one term per group.
    pub fn group_l2(groups: Vec<Vec<usize>>, lambda: f64) -> Result<Self> {
        check_nonneg("lambda", lambda)?;
        let mut seen = std::collections::HashSet::new();
        for g in &groups {
            for &i in g {
                if !seen.insert(i) {
                    return Err(OptError::InvalidParameter(format!(
                        "coordinate {i} appears in two groups; use one term per group"
                    )));
                }
            }
        }
        Ok(ProxTerm {
            kind: ProxKind::GroupL2 { groups, lambda },
        })
    }

    pub fn hinge(a: Array1<f64>, b: f64) -> Result<Self> {
        if b != 1.0 && b != -1.0 {
            return Err(OptError::Domain(format!("hinge label {b} not in {{-1,+1}}")));
        }
        if linalg::norm_sq(&a) == 0.0 {
            return Err(OptError::InvalidParameter("hinge with a = 0".into()));
        }
        Ok(ProxTerm {
            kind: ProxKind::Hinge { a, b },
        })
    }

    pub fn hyperplane(a: Array1<f64>, b: f64) -> Result<Self> {
        if linalg::norm_sq(&a) == 0.0 {
            return Err(OptError::InvalidParameter("hyperplane with a = 0".into()));
        }
        Ok(ProxTerm {
            kind: ProxKind::Hyperplane { a, b },
        })
    }

    /// Row `j` of the Dantzig constraint `|A^T (b - A x)|_∞ <= λ`.
    pub fn box_dantzig(a: &Array2<f64>, b: &Array1<f64>, lambda: f64, j: usize) -> Result<Self> {
        check_nonneg("lambda", lambda)?;
        if a.nrows() != b.len() || j >= a.ncols() {
            return Err(OptError::Dimension("box_dantzig shapes".into()));
        }
        let c = a.t().dot(&a.column(j));
        if linalg::norm_sq(&c) == 0.0 {
            return Err(OptError::InvalidParameter(format!("column {j} of A is zero")));
        }
        let e = a.column(j).dot(b);
        Ok(ProxTerm {
            kind: ProxKind::BoxDantzig { c, e, lambda },
        })
    }

    pub fn boxed(lo: f64, hi: f64) -> Result<Self> {
        if !(lo <= hi) {
            return Err(OptError::InvalidParameter(format!("empty box [{lo}, {hi}]")));
        }
        Ok(ProxTerm {
            kind: ProxKind::Box { lo, hi },
        })
    }

    pub fn point(b: Array1<f64>) -> Self {
        ProxTerm {
            kind: ProxKind::Point { b },
        }
    }

    pub fn consensus(workers: usize, inner: ProxTerm) -> Result<Self> {
        if workers == 0 {
            return Err(OptError::InvalidParameter("consensus over 0 workers".into()));
        }
        Ok(ProxTerm {
            kind: ProxKind::Consensus {
                workers,
                inner: Box::new(inner),
            },
        })
    }

    /// `φ(A^T x)` with `A` of shape `d x k`. Several columns are only
    /// supported for `Phi::Point` (affine constraints).
    pub fn linear_comp(a: Array2<f64>, phi: Phi) -> Result<Self> {
        let k = a.ncols();
        if k == 0 {
            return Err(OptError::Dimension("A has no columns".into()));
        }
        let gram = a.t().dot(&a);
        let eig = linalg::sym_eigenvalues(&gram);
        let top = eig[k - 1];
        if top <= 0.0 || eig[0] <= 1e-12 * top || k > a.nrows() {
            return Err(OptError::RankDeficient(format!(
                "A^T A has eigenvalues in [{:e}, {:e}]",
                eig[0], top
            )));
        }
        match &phi {
            Phi::Point(c) if c.len() != k => {
                return Err(OptError::Dimension(format!(
                    "point has {} entries, A has {k} columns",
                    c.len()
                )))
            }
            Phi::Point(_) => {}
            _ if k > 1 => {
                return Err(OptError::InvalidParameter(
                    "only Phi::Point supports several columns".into(),
                ))
            }
            Phi::Interval(lo, hi) if !(lo <= hi) => return Err(OptError::InvalidParameter("empty interval".into())),
            _ => {}
        }
        Ok(ProxTerm {
            kind: ProxKind::LinearComp { a, gram, phi },
        })
    }

    pub fn fused_lasso(l1: f64, l2: f64) -> Result<Self> {
        check_nonneg("lambda1", l1)?;
        check_nonneg("lambda2", l2)?;
        Ok(ProxTerm {
            kind: ProxKind::FusedLasso { l1, l2 },
        })
    }

    /// Strong convexity modulus.
    pub fn mu(&self) -> f64 {
        match &self.kind {
            ProxKind::SqNorm { lambda } => *lambda,
            ProxKind::Elastic { l2, .. } => *l2,
            _ => 0.0,
        }
    }

    /// Smoothness constant, `+∞` for non-smooth terms.
    pub fn smoothness(&self) -> f64 {
        match &self.kind {
            ProxKind::Zero => 0.0,
            ProxKind::SqNorm { lambda } => *lambda,
            _ => f64::INFINITY,
        }
    }

    pub fn is_zero(&self) -> bool {
        matches!(self.kind, ProxKind::Zero)
    }

    /// True when the term is the indicator of a closed convex set, so that
    /// `prox` is a projection.
    pub fn is_indicator(&self) -> bool {
        match &self.kind {
            ProxKind::Hyperplane { .. }
            | ProxKind::BoxDantzig { .. }
            | ProxKind::Box { .. }
            | ProxKind::Point { .. } => true,
            ProxKind::LinearComp { phi, .. } => matches!(phi, Phi::Interval(..) | Phi::Point(_)),
            _ => false,
        }
    }

    /// `value` with indicators contributing 0; feasibility is reported
    /// separately by callers that care.
    pub fn finite_value(&self, x: &Array1<f64>) -> f64 {
        if self.is_indicator() {
            0.0
        } else {
            self.value(x)
        }
    }

    /// Term value; indicators give 0 or `+∞` with a small feasibility slack.
    pub fn value(&self, x: &Array1<f64>) -> f64 {
        let ind = |ok: bool| if ok { 0.0 } else { f64::INFINITY };
        match &self.kind {
            ProxKind::Zero => 0.0,
            ProxKind::L1 { lambda } => lambda * x.iter().map(|v| v.abs()).sum::<f64>(),
            ProxKind::SqNorm { lambda } => 0.5 * lambda * x.dot(x),
            ProxKind::Elastic { l1, l2 } => l1 * x.iter().map(|v| v.abs()).sum::<f64>() + 0.5 * l2 * x.dot(x),
            ProxKind::GroupL2 { groups, lambda } => {
                lambda
                    * groups
                        .iter()
                        .map(|g| g.iter().map(|&i| x[i] * x[i]).sum::<f64>().sqrt())
                        .sum::<f64>()
            }
            ProxKind::Hinge { a, b } => (1.0 - b * a.dot(x)).max(0.0),
            ProxKind::Hyperplane { a, b } => {
                ind((a.dot(x) - b).abs() <= FEAS_TOL * (1.0 + b.abs() + linalg::norm(a) * linalg::norm(x)))
            }
            ProxKind::BoxDantzig { c, e, lambda } => ind((c.dot(x) - e).abs() <= lambda + FEAS_TOL),
            ProxKind::Box { lo, hi } => ind(x.iter().all(|&v| v >= lo - FEAS_TOL && v <= hi + FEAS_TOL)),
            ProxKind::Point { b } => ind(linalg::dist_sq(x, b).sqrt() <= FEAS_TOL * (1.0 + linalg::norm(b))),
            ProxKind::Consensus { workers, inner } => {
                let d = x.len() / workers;
                let first = x.slice(s![0..d]).to_owned();
                let same = (1..*workers).all(|m| {
                    let blk = x.slice(s![m * d..(m + 1) * d]).to_owned();
                    linalg::dist_sq(&blk, &first).sqrt() <= FEAS_TOL * (1.0 + linalg::norm(&first))
                });
                if same {
                    inner.value(&first)
                } else {
                    f64::INFINITY
                }
            }
            ProxKind::LinearComp { a, phi, .. } => match phi {
                Phi::Point(c) => {
                    let r = a.t().dot(x) - c;
                    ind(linalg::norm(&r) <= FEAS_TOL * (1.0 + linalg::norm(c)))
                }
                _ => phi.value(a.column(0).dot(x)),
            },
            ProxKind::FusedLasso { l1, l2 } => {
                let tv: f64 = x.windows(2).into_iter().map(|w| (w[1] - w[0]).abs()).sum();
                l1 * x.iter().map(|v| v.abs()).sum::<f64>() + l2 * tv
            }
        }
    }

    /// `prox_{γ·term}(x)`. Panics if `x` has the wrong length for the term.
    pub fn prox(&self, gamma: f64, x: &Array1<f64>) -> Array1<f64> {
        debug_assert!(gamma > 0.0, "prox parameter must be positive");
        match &self.kind {
            ProxKind::Zero => x.clone(),
            ProxKind::L1 { lambda } => x.mapv(|v| soft(v, gamma * lambda)),
            ProxKind::SqNorm { lambda } => x / (1.0 + gamma * lambda),
            ProxKind::Elastic { l1, l2 } => {
                let c = 1.0 / (1.0 + gamma * l2);
                x.mapv(|v| c * soft(v, gamma * l1))
            }
            ProxKind::GroupL2 { groups, lambda } => {
                let mut out = x.clone();
                for g in groups {
                    let nrm = g.iter().map(|&i| x[i] * x[i]).sum::<f64>().sqrt();
                    let f = if nrm > 0.0 {
                        (1.0 - gamma * lambda / nrm).max(0.0)
                    } else {
                        0.0
                    };
                    for &i in g {
                        out[i] = f * x[i];
                    }
                }
                out
            }
            ProxKind::Hinge { a, b } => {
                let t = ((1.0 - b * a.dot(x)) / a.dot(a)).clamp(0.0, gamma);
                let mut out = x.clone();
                out.scaled_add(t * b, a);
                out
            }
            ProxKind::Hyperplane { a, b } => {
                let mut out = x.clone();
                out.scaled_add(-(a.dot(x) - b) / a.dot(a), a);
                out
            }
            ProxKind::BoxDantzig { c, e, lambda } => {
                let s = c.dot(x) - e;
                let mut out = x.clone();
                if s > *lambda {
                    out.scaled_add(-(s - lambda) / c.dot(c), c);
                } else if s < -lambda {
                    out.scaled_add(-(s + lambda) / c.dot(c), c);
                }
                out
            }
            ProxKind::Box { lo, hi } => x.mapv(|v| v.clamp(*lo, *hi)),
            ProxKind::Point { b } => {
                assert_eq!(b.len(), x.len(), "point term dimension");
                b.clone()
            }
            ProxKind::Consensus { workers, inner } => {
                let m = *workers;
                assert_eq!(x.len() % m, 0, "consensus input is not M blocks");
                let d = x.len() / m;
                let mut mean = Array1::zeros(d);
                for k in 0..m {
                    mean += &x.slice(s![k * d..(k + 1) * d]);
                }
                mean /= m as f64;
                let u = inner.prox(gamma / m as f64, &mean);
                let mut out = Array1::zeros(x.len());
                for k in 0..m {
                    out.slice_mut(s![k * d..(k + 1) * d]).assign(&u);
                }
                out
            }
            ProxKind::LinearComp { a, gram, phi } => match phi {
                Phi::Point(c) => {
                    let r = a.t().dot(x) - c;
                    let beta = linalg::solve(gram, &r).expect("gram is nonsingular");
                    x - &a.dot(&beta)
                }
                _ => {
                    let col = a.column(0);
                    let nsq = gram[[0, 0]];
                    let v = col.dot(x);
                    let t = phi.prox_1d(gamma * nsq, v);
                    let mut out = x.clone();
                    out.scaled_add(-(v - t) / nsq, &col);
                    out
                }
            },
            ProxKind::FusedLasso { l1, l2 } => {
                let tv = tv1d_denoise(x.as_slice().expect("contiguous"), gamma * l2);
                Array1::from_iter(tv.into_iter().map(|v| soft(v, gamma * l1)))
            }
        }
    }
}

/// Soft thresholding; the kink `|v| = t` maps to 0.
pub fn soft(v: f64, t: f64) -> f64 {
    if v > t {
        v - t
    } else if v < -t {
        v + t
    } else {
        0.0
    }
}

/// `|x* - prox_{γψ}(x* - γ∇f(x*))|`, zero exactly at minimizers of `f + ψ`.
pub fn prox_fixed_point_check<S: Smooth + ?Sized>(term: &ProxTerm, f: &S, gamma: f64, x_star: &Array1<f64>) -> f64 {
    let mut u = x_star.clone();
    u.scaled_add(-gamma, &f.grad(x_star));
    linalg::norm(&(x_star - &term.prox(gamma, &u)))
}

/// Exact 1-D total-variation denoising,
/// `argmin_x |x - y|^2/2 + λ Σ |x_{i+1} - x_i|` (Condat's direct method).
pub fn tv1d_denoise(input: &[f64], lambda: f64) -> Vec<f64> {
    let width = input.len();
    if width == 0 {
        return Vec::new();
    }
    if lambda <= 0.0 || width == 1 {
        return input.to_vec();
    }
    let mut output = vec![0.0; width];
    let (mut k, mut k0, mut kplus, mut kminus) = (0usize, 0usize, 0usize, 0usize);
    let mut umin = lambda;
    let mut umax = -lambda;
    let mut vmin = input[0] - lambda;
    let mut vmax = input[0] + lambda;
    let twolambda = 2.0 * lambda;
    let minlambda = -lambda;
    loop {
        while k == width - 1 {
            if umin < 0.0 {
                loop {
                    output[k0] = vmin;
                    k0 += 1;
                    if k0 > kminus {
                        break;
                    }
                }
                k = k0;
                kminus = k0;
                vmin = input[k0];
                umin = lambda;
                umax = vmin + umin - vmax;
            } else if umax > 0.0 {
                loop {
                    output[k0] = vmax;
                    k0 += 1;
                    if k0 > kplus {
                        break;
                    }
                }
                k = k0;
                kplus = k0;
                vmax = input[k0];
                umax = minlambda;
                umin = vmax + umax - vmin;
            } else {
                vmin += umin / (k - k0 + 1) as f64;
                loop {
                    output[k0] = vmin;
                    k0 += 1;
                    if k0 > k {
                        break;
                    }
                }
                return output;
            }
        }
        umin += input[k + 1] - vmin;
        if umin < minlambda {
            loop {
                output[k0] = vmin;
                k0 += 1;
                if k0 > kminus {
                    break;
                }
            }
            k = k0;
            kminus = k0;
            kplus = k0;
            vmin = input[k0];
            vmax = vmin + twolambda;
            umin = lambda;
            umax = minlambda;
        } else {
            umax += input[k + 1] - vmax;
            if umax > lambda {
                loop {
                    output[k0] = vmax;
                    k0 += 1;
                    if k0 > kplus {
                        break;
                    }
                }
                k = k0;
                kminus = k0;
                kplus = k0;
                vmax = input[k0];
                vmin = vmax - twolambda;
                umin = lambda;
                umax = minlambda;
            } else {
                k += 1;
                if umin >= lambda {
                    kminus = k;
                    vmin += (umin - lambda) / (kminus - k0 + 1) as f64;
                    umin = lambda;
                }
                if umax <= minlambda {
                    kplus = k;
                    vmax += (umax + lambda) / (kplus - k0 + 1) as f64;
                    umax = minlambda;
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::{gaussian_matrix, gaussian_vector, make_least_squares, reference_solution};
    use crate::rng::RngStream;
    use ndarray::array;
    use proptest::prelude::*;

    fn all_terms(d: usize) -> Vec<ProxTerm> {
        let s = RngStream::new(77);
        let a = gaussian_vector(d, &s.child("a"));
        let big = gaussian_matrix(d + 2, d, &s.child("A"));
        let bb = gaussian_vector(d + 2, &s.child("b"));
        let cols = gaussian_matrix(d, 1, &s.child("col"));
        let mut v = vec![
            ProxTerm::zero(),
            ProxTerm::l1(0.7).unwrap(),
            ProxTerm::sqnorm(1.3).unwrap(),
            ProxTerm::elastic(0.4, 0.9).unwrap(),
            ProxTerm::group_l2(vec![(0..d / 2).collect(), (d / 2..d).collect()], 0.8).unwrap(),
            ProxTerm::hinge(a.clone(), -1.0).unwrap(),
            ProxTerm::hyperplane(a.clone(), 0.3).unwrap(),
            ProxTerm::box_dantzig(&big, &bb, 0.5, 1).unwrap(),
            ProxTerm::boxed(-0.5, 1.0).unwrap(),
            ProxTerm::point(Array1::from_elem(d, 0.2)),
            ProxTerm::linear_comp(cols.clone(), Phi::Abs(0.6)).unwrap(),
            ProxTerm::linear_comp(cols.clone(), Phi::Hinge).unwrap(),
            ProxTerm::linear_comp(cols.clone(), Phi::Interval(-0.2, 0.4)).unwrap(),
            ProxTerm::linear_comp(
                cols,
                Phi::Smooth {
                    value: Arc::new(|t: f64| (1.0 + t.exp()).ln()),
                    deriv: Arc::new(|t: f64| 1.0 / (1.0 + (-t).exp())),
                },
            )
            .unwrap(),
            ProxTerm::linear_comp(gaussian_matrix(d, 2, &s.child("two")), Phi::Point(array![0.1, -0.3])).unwrap(),
            ProxTerm::fused_lasso(0.3, 0.5).unwrap(),
        ];
        if d % 2 == 0 {
            v.push(ProxTerm::consensus(2, ProxTerm::l1(0.5).unwrap()).unwrap());
        }
        v
    }

    #[test]
    fn l1_examples() {
        let t = ProxTerm::l1(1.0).unwrap();
        assert_eq!(t.prox(1.0, &array![0.0, 2.0, -0.5, 1.0]), array![0.0, 1.0, 0.0, 0.0]);
    }

    #[test]
    fn elastic_example() {
        let t = ProxTerm::elastic(1.0, 1.0).unwrap();
        assert_eq!(t.prox(1.0, &array![3.0]), array![1.0]);
    }

    #[test]
    fn hyperplane_example() {
        let t = ProxTerm::hyperplane(array![1.0, 0.0], 0.0).unwrap();
        assert_eq!(t.prox(0.3, &array![2.0, 3.0]), array![0.0, 3.0]);
    }

    #[test]
    fn consensus_example() {
        let t = ProxTerm::consensus(2, ProxTerm::zero()).unwrap();
        assert_eq!(t.prox(1.0, &array![1.0, 3.0]), array![2.0, 2.0]);
    }

    #[test]
    fn zero_is_identity() {
        let x = array![1.0, -4.0];
        assert_eq!(ProxTerm::zero().prox(2.5, &x), x);
    }

    #[test]
    fn overlapping_groups_rejected() {
        assert!(ProxTerm::group_l2(vec![vec![0, 1], vec![1, 2]], 1.0).is_err());
    }

    #[test]
    fn rank_deficient_linear_comp() {
        let a = array![[1.0, 2.0], [2.0, 4.0], [0.0, 0.0]];
        let e = ProxTerm::linear_comp(a, Phi::Point(array![0.0, 0.0])).unwrap_err();
        assert!(matches!(e, OptError::RankDeficient(_)));
        assert!(e.to_string().contains("hyperplane"));
    }

    #[test]
    fn hinge_is_linear_comp_of_hinge() {
        let a = array![0.5, -1.0, 2.0];
        let direct = ProxTerm::hinge(a.clone(), -1.0).unwrap();
        let comp = ProxTerm::linear_comp((-&a).insert_axis(ndarray::Axis(1)), Phi::Hinge).unwrap();
        for k in 0..20 {
            let x = gaussian_vector(3, &RngStream::with_label(k, "h"));
            let p = direct.prox(0.7, &x);
            let q = comp.prox(0.7, &x);
            assert!(linalg::norm(&(&p - &q)) < 1e-12);
        }
    }

    #[test]
    fn linear_comp_step_in_range() {
        for t in all_terms(5) {
            if let ProxKind::LinearComp { a, .. } = t.kind() {
                for k in 0..10 {
                    let x = gaussian_vector(5, &RngStream::with_label(k, "r")) * 2.0;
                    let step = &x - &t.prox(0.9, &x);
                    assert!(linalg::range_residual(a, &step) <= 1e-9);
                }
            }
        }
    }

    #[test]
    fn moreau_l1_vs_linf_ball() {
        let l1 = ProxTerm::l1(1.0).unwrap();
        let ball = ProxTerm::boxed(-1.0, 1.0).unwrap();
        for i in -40..=40 {
            let x = array![i as f64 * 0.1 + 0.013];
            let s = l1.prox(1.0, &x) + ball.prox(1.0, &x);
            assert!((s[0] - x[0]).abs() <= 1e-10);
        }
    }

    /// TV solution certificate: the dual is the running sum of `y - x`.
    fn tv_certificate(y: &[f64], x: &[f64], lam: f64) -> bool {
        let mut u = 0.0;
        for j in 0..y.len() - 1 {
            u += y[j] - x[j];
            if u.abs() > lam * (1.0 + 1e-9) + 1e-12 {
                return false;
            }
            let dx = x[j] - x[j + 1];
            if dx.abs() > 1e-12 && (u - lam * dx.signum()).abs() > 1e-9 * (1.0 + lam) {
                return false;
            }
        }
        u += y[y.len() - 1] - x[y.len() - 1];
        u.abs() < 1e-9
    }

    #[test]
    fn tv1d_small_cases() {
        assert_eq!(tv1d_denoise(&[], 1.0), Vec::<f64>::new());
        assert_eq!(tv1d_denoise(&[3.0], 1.0), vec![3.0]);
        let x = tv1d_denoise(&[0.0, 10.0], 1.0);
        assert_eq!(x, vec![1.0, 9.0]);
        let x = tv1d_denoise(&[0.0, 1.0], 1.0);
        assert_eq!(x, vec![0.5, 0.5]);
    }

    #[test]
    fn fixed_point_check_at_reference() {
        let s = RngStream::new(21);
        let a = gaussian_matrix(15, 6, &s.child("a"));
        let b = gaussian_vector(15, &s.child("b"));
        let f = make_least_squares(a, b, 0.0).unwrap();
        let psi = ProxTerm::l1(0.1).unwrap();
        let (x, _) = reference_solution(&f, &psi, 1e-13).unwrap();
        let r: Vec<f64> = [0.1, 1.0, 10.0]
            .iter()
            .map(|&g| prox_fixed_point_check(&psi, &f, g / f.smoothness(), &x))
            .collect();
        assert!(r.iter().all(|&v| v <= 1e-7), "{r:?}");
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn tv1d_is_optimal(y in proptest::collection::vec(-5.0f64..5.0, 1..40), lam in 0.01f64..3.0) {
            let x = tv1d_denoise(&y, lam);
            prop_assert!(tv_certificate(&y, &x, lam));
        }

        #[test]
        fn firmly_nonexpansive(seed in 0u64..10_000, gamma in 0.05f64..5.0) {
            let s = RngStream::new(seed);
            for t in all_terms(4) {
                let x = gaussian_vector(4, &s.child("x")) * 3.0;
                let y = gaussian_vector(4, &s.child("y")) * 3.0;
                let (px, py) = (t.prox(gamma, &x), t.prox(gamma, &y));
                let lhs = linalg::dist_sq(&px, &py);
                let rhs = linalg::dist_sq(&x, &y) - linalg::dist_sq(&(&x - &px), &(&y - &py));
                prop_assert!(lhs <= rhs + 1e-10, "{:?}: {} > {}", t.kind(), lhs, rhs);
                if t.mu() > 0.0 {
                    prop_assert!(lhs <= linalg::dist_sq(&x, &y) / (1.0 + 2.0 * gamma * t.mu()) + 1e-10);
                }
            }
        }

        #[test]
        fn prox_lands_in_domain(seed in 0u64..10_000, gamma in 0.05f64..5.0) {
            let x = gaussian_vector(4, &RngStream::new(seed)) * 3.0;
            for t in all_terms(4) {
                prop_assert!(t.value(&t.prox(gamma, &x)).is_finite(), "{:?}", t.kind());
            }
        }
    }
}
