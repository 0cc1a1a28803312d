//! Decentralized PriLiCoSGD on a graph: `min Σ_i f_i(x)` with one local
//! copy `x_i` per node and gossip through the graph Laplacian.

use ndarray::{s, Array1, Array2};

use super::estimator::GradEstimator;
use super::linop::laplacian;
use super::primal_dual::{check_stepsizes, PdOptions};
use crate::error::{OptError, Result};
use crate::harness::trace::{MetricTrace, Recorder, Reference};
use crate::linalg;
use crate::problems::FiniteSumObjective;
use crate::rng::RngStream;

/// Node states `x_i`, `a_i` and the gossip matrix `Ŵ`.
#[derive(Clone, Debug)]
pub struct Destroy {
    pub xs: Vec<Array1<f64>>,
    pub a: Vec<Array1<f64>>,
    w: Array2<f64>,
    neighbors: Vec<Vec<usize>>,
    gamma: f64,
    tau: f64,
}

impl Destroy {
    /// All nodes start at `x0` with `a_i = 0`.
    pub fn new(nodes: usize, edges: &[(usize, usize)], x0: &Array1<f64>, gamma: f64, tau: f64) -> Result<Self> {
        let w = laplacian(nodes, edges)?;
        let neighbors = (0..nodes)
            .map(|i| (0..nodes).filter(|&j| j != i && w[[i, j]] != 0.0).collect())
            .collect();
        Ok(Destroy {
            xs: vec![x0.clone(); nodes],
            a: vec![Array1::zeros(x0.len()); nodes],
            w,
            neighbors,
            gamma,
            tau,
        })
    }

    pub fn gossip(&self) -> &Array2<f64> {
        &self.w
    }

    /// One synchronous round given the local estimates `g_i`. Node `i`
    /// reads only `t_j`, `a_j` of its neighbours.
    pub fn step(&mut self, g: &[Array1<f64>]) {
        let (gamma, tau) = (self.gamma, self.tau);
        let t: Vec<Array1<f64>> = self
            .xs
            .iter()
            .zip(g)
            .map(|(x, gi)| {
                let mut t = x.clone();
                t.scaled_add(-gamma, gi);
                t
            })
            .collect();
        let mut a_next = Vec::with_capacity(self.xs.len());
        for i in 0..self.xs.len() {
            let wii = self.w[[i, i]];
            let mut ai = &self.a[i] * (1.0 - tau * gamma * wii);
            ai.scaled_add(tau * wii, &t[i]);
            for &j in &self.neighbors[i] {
                let mut u = t[j].clone();
                u.scaled_add(-gamma, &self.a[j]);
                ai.scaled_add(tau * self.w[[i, j]], &u);
            }
            a_next.push(ai);
        }
        for (i, ti) in t.into_iter().enumerate() {
            let mut x = ti;
            x.scaled_add(-gamma, &a_next[i]);
            self.xs[i] = x;
        }
        self.a = a_next;
    }

    pub fn mean(&self) -> Array1<f64> {
        let mut m = Array1::zeros(self.xs[0].len());
        for x in &self.xs {
            m += x;
        }
        m / self.xs.len() as f64
    }

    /// `(1/N) Σ ‖x_i - x̄‖²`
    pub fn consensus_residual(&self) -> f64 {
        let m = self.mean();
        self.xs.iter().map(|x| linalg::dist_sq(x, &m)).sum::<f64>() / self.xs.len() as f64
    }

    /// The node vectors stacked into one vector of length `N d`.
    pub fn stacked(&self) -> Array1<f64> {
        let d = self.xs[0].len();
        let mut out = Array1::zeros(d * self.xs.len());
        for (i, x) in self.xs.iter().enumerate() {
            out.slice_mut(s![i * d..(i + 1) * d]).assign(x);
        }
        out
    }
}

/// Per-node estimators on substreams `node{i}`.
pub fn node_estimators(
    nodes: &[FiniteSumObjective],
    opts: &PdOptions,
    x0: &Array1<f64>,
    stream: &RngStream,
) -> Result<Vec<GradEstimator>> {
    nodes
        .iter()
        .enumerate()
        .map(|(i, f)| GradEstimator::new(opts.estimator, opts.batch, f, x0, &stream.child(&format!("node{i}"))))
        .collect()
}

/// Runs DESTROY on `min Σ_i f_i(x)`. Rows record the node average `x̄`
/// (so `f_gap = Σ f_i(x̄) - f*`); the aux series `consensus` holds
/// `(1/N) Σ ‖x_i - x̄‖²`. Requires `γτ‖Ŵ‖ ≤ 1`.
pub fn destroy_run(
    nodes: &[FiniteSumObjective],
    edges: &[(usize, usize)],
    opts: &PdOptions,
    x0: &Array1<f64>,
    stream: &RngStream,
    reference: Option<&Reference>,
) -> Result<MetricTrace> {
    if nodes.is_empty() {
        return Err(OptError::InvalidParameter("DESTROY needs at least one node".into()));
    }
    if nodes.iter().any(|f| f.dim() != x0.len()) {
        return Err(OptError::Dimension("node objectives and x0 disagree".into()));
    }
    let mut s = Destroy::new(nodes.len(), edges, x0, opts.gamma, opts.tau)?;
    let wn = linalg::sym_eigenvalues(s.gossip()).into_iter().fold(0.0, f64::max);
    let nu = nodes.iter().map(|f| f.smoothness()).fold(0.0, f64::max);
    check_stepsizes(opts.gamma, opts.tau, wn.sqrt(), false, opts.estimator, nu)?;
    let mut ests = node_estimators(nodes, opts, x0, stream)?;
    let total = |x: &Array1<f64>| nodes.iter().map(|f| f.value(x)).sum::<f64>();
    let mut rec = Recorder::new(total, reference);
    let grads = |e: &[GradEstimator]| e.iter().map(|e| e.grads).sum::<u64>();
    rec.counters.grads = grads(&ests);
    rec.record(0, x0);
    rec.trace.push_aux("consensus", 0.0);
    for k in 1..=opts.steps {
        let g: Vec<Array1<f64>> = ests
            .iter_mut()
            .zip(nodes)
            .zip(&s.xs)
            .map(|((e, f), x)| e.next(f, x))
            .collect();
        s.step(&g);
        if s.xs.iter().any(|x| x.iter().any(|v| !v.is_finite())) {
            return Err(OptError::Numerical(format!("DESTROY diverged at step {k}")));
        }
        rec.counters.grads = grads(&ests);
        rec.record(k as u64, &s.mean());
        rec.trace.push_aux("consensus", s.consensus_residual());
    }
    let x = s.mean();
    Ok(rec.finish(x))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::{self as generators, make_least_squares, make_quadratic_distance};
    use crate::splitting::estimator::EstimatorKind;
    use crate::splitting::linop::LinOp;
    use crate::splitting::primal_dual::{PddyInit, PriLiCoSgd};

    fn opts(gamma: f64, tau: f64, est: EstimatorKind, steps: usize) -> PdOptions {
        PdOptions {
            gamma,
            tau,
            estimator: est,
            batch: 1,
            steps,
            init: PddyInit::FromPrimal,
        }
    }

    #[test]
    fn identical_nodes_stay_in_consensus() {
        let f = make_quadratic_distance(Array1::from(vec![1.0, -1.0]));
        let nodes = vec![f.clone(), f.clone(), f.clone(), f];
        let edges = [(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)];
        let t = destroy_run(
            &nodes,
            &edges,
            &opts(0.5, 0.5, EstimatorKind::FullGd, 50),
            &Array1::zeros(2),
            &RngStream::new(0),
            None,
        )
        .unwrap();
        assert!(t.aux["consensus"].iter().all(|&c| c <= 1e-28));
    }

    #[test]
    fn two_node_path_mean_of_minimizers() {
        let c1 = Array1::from(vec![1.0, 2.0, -1.0]);
        let c2 = Array1::from(vec![3.0, 0.0, 1.0]);
        let nodes = vec![make_quadratic_distance(c1.clone()), make_quadratic_distance(c2.clone())];
        // ‖Ŵ‖ = 2 for the 2-node path
        let t = destroy_run(
            &nodes,
            &[(0, 1)],
            &opts(0.5, 0.9, EstimatorKind::FullGd, 400),
            &Array1::zeros(3),
            &RngStream::new(0),
            None,
        )
        .unwrap();
        let want = (&c1 + &c2) / 2.0;
        assert!(linalg::dist_sq(t.final_x.as_ref().unwrap(), &want).sqrt() <= 1e-6);
        assert!(*t.aux["consensus"].last().unwrap() <= 1e-12);
    }

    #[test]
    fn disconnected_graph_is_rejected() {
        let f = make_quadratic_distance(Array1::zeros(1));
        let nodes = vec![f.clone(), f.clone(), f];
        let r = destroy_run(
            &nodes,
            &[(0, 1)],
            &opts(0.5, 0.5, EstimatorKind::FullGd, 1),
            &Array1::zeros(1),
            &RngStream::new(0),
            None,
        );
        assert!(matches!(r, Err(OptError::DisconnectedGraph(2))));
    }

    #[test]
    fn equals_lifted_prilicosgd() {
        let s = RngStream::new(3);
        let d = 3;
        let nodes: Vec<FiniteSumObjective> = (0..4)
            .map(|i| {
                let st = s.child(&format!("f{i}"));
                make_least_squares(
                    generators::gaussian_matrix(5, d, &st),
                    generators::gaussian_vector(5, &st.child("b")),
                    0.1,
                )
                .unwrap()
            })
            .collect();
        let edges = [(0, 1), (1, 2), (2, 3)];
        let o = opts(0.05, 2.0, EstimatorKind::Saga, 0);
        let x0 = Array1::zeros(d);
        let mut dz = Destroy::new(4, &edges, &x0, o.gamma, o.tau).unwrap();
        let w = LinOp::Kron {
            w: dz.gossip().clone(),
            d,
        };
        let mut lifted = PriLiCoSgd::new(Array1::zeros(4 * d), Array1::zeros(4 * d), o.gamma, o.tau);
        let mut e1 = node_estimators(&nodes, &o, &x0, &s).unwrap();
        let mut e2 = node_estimators(&nodes, &o, &x0, &s).unwrap();
        let c = Array1::zeros(4 * d);
        for _ in 0..200 {
            let g1: Vec<Array1<f64>> = (0..4).map(|i| e1[i].next(&nodes[i], &dz.xs[i])).collect();
            let mut g2 = Array1::zeros(4 * d);
            for i in 0..4 {
                let xi = lifted.x.slice(s![i * d..(i + 1) * d]).to_owned();
                g2.slice_mut(s![i * d..(i + 1) * d]).assign(&e2[i].next(&nodes[i], &xi));
            }
            dz.step(&g1);
            lifted.step(&g2, &w, &c);
            assert!(linalg::dist_sq(&dz.stacked(), &lifted.x).sqrt() <= 1e-12);
        }
    }
}
