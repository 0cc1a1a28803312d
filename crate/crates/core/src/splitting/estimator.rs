use std::collections::BTreeSet;

use ndarray::Array1;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{OptError, Result};
use crate::linalg;
use crate::problems::FiniteSumObjective;
use crate::rng::{Rng, RngStream};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EstimatorKind {
    FullGd,
    Sgd,
    /// Loopful SVRG; the reference point is refreshed every `loop_len`
    /// calls (default `2n`).
    Svrg {
        #[serde(default)]
        loop_len: Option<usize>,
    },
    Saga,
    /// Loopless SVRG; refresh with probability `p` (default `1/n`).
    Lsvrg {
        #[serde(default)]
        p: Option<f64>,
    },
}

impl EstimatorKind {
    pub fn is_deterministic(&self) -> bool {
        matches!(self, EstimatorKind::FullGd)
    }
}

#[derive(Clone, Debug)]
enum State {
    Full,
    Sgd,
    Svrg {
        loop_len: usize,
        calls: usize,
        anchor: Array1<f64>,
        anchor_grad: Array1<f64>,
    },
    Saga {
        table: Vec<Array1<f64>>,
        avg: Array1<f64>,
    },
    Lsvrg {
        p: f64,
        anchor: Array1<f64>,
        anchor_grad: Array1<f64>,
        coin: Rng,
    },
}

/// Stochastic gradient oracle `v ≈ ∇f(x)` for a finite sum. Component
/// indices are drawn uniformly with replacement, `batch` per call.
#[derive(Clone, Debug)]
pub struct GradEstimator {
    kind: EstimatorKind,
    batch: usize,
    rng: Rng,
    state: State,
    /// Component gradient evaluations so far (a full gradient costs `n`).
    pub grads: u64,
}

impl GradEstimator {
    /// Estimator for `f` with its memory (SVRG anchor, SAGA table) built
    /// at `start`.
    pub fn new(
        kind: EstimatorKind,
        batch: usize,
        f: &FiniteSumObjective,
        start: &Array1<f64>,
        stream: &RngStream,
    ) -> Result<Self> {
        if batch == 0 {
            return Err(OptError::InvalidParameter("estimator batch must be >= 1".into()));
        }
        let n = f.n();
        let mut grads = 0u64;
        let state = match kind {
            EstimatorKind::FullGd => State::Full,
            EstimatorKind::Sgd => State::Sgd,
            EstimatorKind::Svrg { loop_len } => {
                let loop_len = loop_len.unwrap_or(2 * n);
                if loop_len == 0 {
                    return Err(OptError::InvalidParameter("SVRG loop length must be >= 1".into()));
                }
                grads += n as u64;
                State::Svrg {
                    loop_len,
                    calls: 0,
                    anchor: start.clone(),
                    anchor_grad: f.grad(start),
                }
            }
            EstimatorKind::Saga => {
                let table: Vec<Array1<f64>> = (0..n).map(|i| f.sample_grad(i, start)).collect();
                grads += n as u64;
                let mut avg = Array1::zeros(f.dim());
                for t in &table {
                    avg += t;
                }
                avg /= n as f64;
                State::Saga { table, avg }
            }
            EstimatorKind::Lsvrg { p } => {
                let p = p.unwrap_or(1.0 / n as f64);
                if !(p > 0.0 && p <= 1.0) {
                    return Err(OptError::InvalidParameter(format!(
                        "L-SVRG probability must lie in (0, 1], got {p}"
                    )));
                }
                grads += n as u64;
                State::Lsvrg {
                    p,
                    anchor: start.clone(),
                    anchor_grad: f.grad(start),
                    coin: stream.child("refresh").rng(),
                }
            }
        };
        Ok(GradEstimator {
            kind,
            batch,
            rng: stream.child("sample").rng(),
            state,
            grads,
        })
    }

    pub fn kind(&self) -> EstimatorKind {
        self.kind
    }

    fn sample(&mut self, n: usize) -> Vec<usize> {
        (0..self.batch).map(|_| self.rng.random_range(0..n)).collect()
    }

    /// Next estimate at `x`, updating the estimator memory.
    pub fn next(&mut self, f: &FiniteSumObjective, x: &Array1<f64>) -> Array1<f64> {
        let n = f.n();
        if let State::Full = self.state {
            self.grads += n as u64;
            return f.grad(x);
        }
        let idx = self.sample(n);
        let b = self.batch as f64;
        match &mut self.state {
            State::Full => unreachable!(),
            State::Sgd => {
                let mut v = Array1::zeros(f.dim());
                for &i in &idx {
                    v += &f.sample_grad(i, x);
                }
                self.grads += idx.len() as u64;
                v / b
            }
            State::Svrg {
                loop_len,
                calls,
                anchor,
                anchor_grad,
            } => {
                if *calls > 0 && *calls % *loop_len == 0 {
                    *anchor = x.clone();
                    *anchor_grad = f.grad(x);
                    self.grads += n as u64;
                }
                *calls += 1;
                let mut v = Array1::zeros(f.dim());
                for &i in &idx {
                    v += &(f.sample_grad(i, x) - f.sample_grad(i, anchor));
                }
                self.grads += 2 * idx.len() as u64;
                v / b + &*anchor_grad
            }
            State::Saga { table, avg } => {
                let mut v = Array1::zeros(f.dim());
                let mut fresh = Vec::with_capacity(idx.len());
                for &i in &idx {
                    let g = f.sample_grad(i, x);
                    v += &(&g - &table[i]);
                    fresh.push((i, g));
                }
                self.grads += idx.len() as u64;
                let v = v / b + &*avg;
                let mut done = BTreeSet::new();
                for (i, g) in fresh {
                    if done.insert(i) {
                        let delta = &g - &table[i];
                        avg.scaled_add(1.0 / n as f64, &delta);
                        table[i] = g;
                    }
                }
                v
            }
            State::Lsvrg {
                p,
                anchor,
                anchor_grad,
                coin,
            } => {
                let mut v = Array1::zeros(f.dim());
                for &i in &idx {
                    v += &(f.sample_grad(i, x) - f.sample_grad(i, anchor));
                }
                self.grads += 2 * idx.len() as u64;
                let v = v / b + &*anchor_grad;
                if coin.random::<f64>() < *p {
                    *anchor = x.clone();
                    *anchor_grad = f.grad(x);
                    self.grads += n as u64;
                }
                v
            }
        }
    }

    /// `‖mean(table) - running average‖` for SAGA, 0 otherwise.
    pub fn saga_drift(&self) -> f64 {
        match &self.state {
            State::Saga { table, avg } => {
                let mut m = Array1::zeros(avg.len());
                for t in table {
                    m += t;
                }
                m /= table.len() as f64;
                linalg::norm(&(m - avg))
            }
            _ => 0.0,
        }
    }
}

/// Constants `(γ_max, ω, ρ)` of an estimator, used by the time-varying
/// SDM stepsize `γ_k = 2/(μω(a+k+1))`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EstimatorConstants {
    pub gamma_max: f64,
    pub omega: f64,
    pub rho: f64,
}

impl EstimatorConstants {
    /// Preset values for `f` with `L = max L_i`, strong convexity `mu`.
    pub fn preset(kind: EstimatorKind, f: &FiniteSumObjective) -> Result<Self> {
        let l = f.max_smoothness();
        let mu = f.strong_convexity();
        match kind {
            EstimatorKind::FullGd => Ok(EstimatorConstants {
                gamma_max: 2.0 / (f.smoothness() + mu),
                omega: 1.0,
                rho: f64::INFINITY,
            }),
            EstimatorKind::Svrg { .. } | EstimatorKind::Saga | EstimatorKind::Lsvrg { .. } => Ok(EstimatorConstants {
                gamma_max: 1.0 / (6.0 * l),
                omega: 1.0 / 3.0,
                rho: 1.0 / (3.0 * f.n() as f64),
            }),
            EstimatorKind::Sgd => Err(OptError::InvalidParameter(
                "SGD has no variance-reduction constants; use a decreasing schedule".into(),
            )),
        }
    }

    /// Smallest admissible shift `a = 2 max{1/(ωμγ_max), 1/ρ}`.
    pub fn min_shift(&self, mu: f64) -> f64 {
        2.0 * (1.0 / (self.omega * mu * self.gamma_max)).max(1.0 / self.rho)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::{self as generators, make_least_squares, make_logistic};

    fn logistic(n: usize, d: usize) -> FiniteSumObjective {
        let ds = generators::synthetic_classification(n, d, false, &RngStream::new(3));
        make_logistic(&ds, 0.1).unwrap()
    }

    #[test]
    fn full_gd_is_exact() {
        let f = logistic(20, 4);
        let x = Array1::from(vec![0.1, -0.2, 0.3, 0.0]);
        let mut e = GradEstimator::new(EstimatorKind::FullGd, 1, &f, &x, &RngStream::new(0)).unwrap();
        assert_eq!(e.next(&f, &x), f.grad(&x));
        assert_eq!(e.grads, 20);
    }

    #[test]
    fn unbiased_within_four_se() {
        let f = logistic(15, 3);
        let x0 = Array1::zeros(3);
        let x = Array1::from(vec![0.5, -1.0, 0.25]);
        let g = f.grad(&x);
        let kinds = [
            EstimatorKind::Sgd,
            EstimatorKind::Svrg {
                loop_len: Some(1_000_000),
            },
            EstimatorKind::Saga,
            EstimatorKind::Lsvrg { p: Some(1e-9) },
        ];
        for kind in kinds {
            let draws = 10_000;
            let mut sum = Array1::<f64>::zeros(3);
            let mut sq = Array1::<f64>::zeros(3);
            // SAGA would learn the table; rebuild it for every draw
            let stream = RngStream::new(7).child(&format!("{kind:?}"));
            let mut e = GradEstimator::new(kind, 1, &f, &x0, &stream).unwrap();
            for t in 0..draws {
                let v = if matches!(kind, EstimatorKind::Saga) {
                    let mut fresh = GradEstimator::new(kind, 1, &f, &x0, &stream.child(&t.to_string())).unwrap();
                    fresh.next(&f, &x)
                } else {
                    e.next(&f, &x)
                };
                sq += &(&v * &v);
                sum += &v;
            }
            let mean = &sum / draws as f64;
            for j in 0..3 {
                let var = sq[j] / draws as f64 - mean[j] * mean[j];
                let se = (var / draws as f64).sqrt();
                assert!((mean[j] - g[j]).abs() <= 4.0 * se + 1e-12, "{kind:?} coord {j}");
            }
        }
    }

    #[test]
    fn saga_running_average_is_consistent() {
        let f = logistic(12, 3);
        let mut x = Array1::zeros(3);
        let mut e = GradEstimator::new(EstimatorKind::Saga, 3, &f, &x, &RngStream::new(1)).unwrap();
        for _ in 0..500 {
            let v = e.next(&f, &x);
            x.scaled_add(-0.1, &v);
            assert!(e.saga_drift() <= 1e-12);
        }
    }

    #[test]
    fn saga_warm_start_by_hand() {
        // f_i(x) = (a_i x - b_i)^2 / 2 with an interpolating solution
        let a = ndarray::arr2(&[[1.0, 0.0], [1.0, 2.0]]);
        let xs = Array1::from(vec![1.0, -1.0]);
        let b = a.dot(&xs);
        let f = make_least_squares(a.clone(), b, 0.0).unwrap();
        let x = Array1::from(vec![0.5, 0.5]);
        let mut e = GradEstimator::new(EstimatorKind::Saga, 1, &f, &xs, &RngStream::new(2)).unwrap();
        let v = e.next(&f, &x);
        // ∇f_i(x*) = 0 and ∇f(x*) = 0, so v is a single component gradient
        let g0 = f.grad_i(0, &x);
        let g1 = f.grad_i(1, &x);
        assert!(v == g0 || v == g1, "{v}");
    }

    #[test]
    fn lsvrg_with_p_one_refreshes_every_step() {
        let f = logistic(10, 3);
        let x0 = Array1::zeros(3);
        let x = Array1::from(vec![0.3, 0.1, -0.4]);
        let mut e = GradEstimator::new(EstimatorKind::Lsvrg { p: Some(1.0) }, 1, &f, &x0, &RngStream::new(4)).unwrap();
        e.next(&f, &x);
        let v = e.next(&f, &x);
        assert!(linalg::dist_sq(&v, &f.grad(&x)) <= 1e-24);
    }

    #[test]
    fn svrg_refreshes_on_schedule() {
        let f = logistic(6, 2);
        let x = Array1::from(vec![0.3, 0.1]);
        let mut e = GradEstimator::new(
            EstimatorKind::Svrg { loop_len: Some(3) },
            1,
            &f,
            &Array1::zeros(2),
            &RngStream::new(5),
        )
        .unwrap();
        for _ in 0..3 {
            e.next(&f, &x);
        }
        assert_eq!(e.grads, 6 + 3 * 2);
        let v = e.next(&f, &x);
        assert_eq!(e.grads, 6 + 3 * 2 + 6 + 2);
        assert!(linalg::dist_sq(&v, &f.grad(&x)) <= 1e-24);
    }

    #[test]
    fn rejects_bad_parameters() {
        let f = logistic(5, 2);
        let x = Array1::zeros(2);
        let s = RngStream::new(0);
        assert!(GradEstimator::new(EstimatorKind::Sgd, 0, &f, &x, &s).is_err());
        assert!(GradEstimator::new(EstimatorKind::Lsvrg { p: Some(0.0) }, 1, &f, &x, &s).is_err());
        assert!(EstimatorConstants::preset(EstimatorKind::Sgd, &f).is_err());
    }
}
