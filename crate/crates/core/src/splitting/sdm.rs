//! Stochastic decoupling: `min f(x) + (1/m) Σ g_j(x) + ψ(x)` touching one
//! `g_j` per step.

use ndarray::{Array1, Array2};
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::estimator::{EstimatorKind, GradEstimator};
use crate::error::{OptError, Result};
use crate::harness::trace::{MetricTrace, Recorder, Reference};
use crate::linalg;
use crate::problems::{make_quadratic_distance, FiniteSumObjective};
use crate::prox::ProxTerm;
use crate::rng::{Rng, RngStream};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IndexOrder {
    #[default]
    Random,
    Cyclic,
}

/// Draws the `g_j` index for each step.
#[derive(Clone, Debug)]
pub struct IndexSampler {
    cum: Vec<f64>,
    order: IndexOrder,
    rng: Rng,
    next: usize,
}

impl IndexSampler {
    pub fn new(probs: &[f64], order: IndexOrder, stream: &RngStream) -> Self {
        let mut acc = 0.0;
        let cum = probs
            .iter()
            .map(|p| {
                acc += p;
                acc
            })
            .collect();
        IndexSampler {
            cum,
            order,
            rng: stream.rng(),
            next: 0,
        }
    }

    pub fn sample(&mut self) -> usize {
        let m = self.cum.len();
        match self.order {
            IndexOrder::Cyclic => {
                let j = self.next;
                self.next = (self.next + 1) % m;
                j
            }
            IndexOrder::Random => {
                let u = self.rng.random::<f64>() * self.cum[m - 1];
                self.cum.iter().position(|&c| u < c).unwrap_or(m - 1)
            }
        }
    }
}

fn check_probs(probs: &[f64]) -> Result<()> {
    if probs.iter().any(|&p| !(p > 0.0) || !p.is_finite()) {
        return Err(OptError::InvalidParameter(
            "every sampling probability must be positive".into(),
        ));
    }
    let s: f64 = probs.iter().sum();
    if (s - 1.0).abs() > 1e-12 {
        return Err(OptError::InvalidParameter(format!(
            "sampling probabilities sum to {s}, not 1"
        )));
    }
    Ok(())
}

/// Probabilities `p_j ∝ ‖a_j‖` over the rows of `a`.
pub fn importance_probs(a: &Array2<f64>) -> Vec<f64> {
    let norms: Vec<f64> = a.rows().into_iter().map(|r| r.dot(&r).sqrt()).collect();
    let s: f64 = norms.iter().sum();
    norms.iter().map(|v| v / s).collect()
}

/// Dual vectors `y_j`, one per `g_j`, with the aggregate `y = (1/m) Σ y_j`.
#[derive(Clone, Debug)]
pub struct DualState {
    pub ys: Vec<Array1<f64>>,
    pub y: Array1<f64>,
    probs: Vec<f64>,
}

impl DualState {
    /// Zero duals; uniform probabilities when `probs` is `None`.
    pub fn new(m: usize, dim: usize, probs: Option<Vec<f64>>) -> Result<Self> {
        let probs = match probs {
            Some(p) => {
                if p.len() != m {
                    return Err(OptError::Dimension(format!("{} probabilities for {m} terms", p.len())));
                }
                check_probs(&p)?;
                p
            }
            None => vec![1.0 / m as f64; m],
        };
        Ok(DualState {
            ys: vec![Array1::zeros(dim); m],
            y: Array1::zeros(dim),
            probs,
        })
    }

    pub fn m(&self) -> usize {
        self.ys.len()
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    /// `η_j = γ / (m p_j)`
    pub fn eta(&self, gamma: f64, j: usize) -> f64 {
        gamma / (self.m() as f64 * self.probs[j])
    }

    /// `‖y - (1/m) Σ y_j‖`
    pub fn aggregate_drift(&self) -> f64 {
        let mut s = Array1::zeros(self.y.len());
        for v in &self.ys {
            s += v;
        }
        s /= self.m().max(1) as f64;
        linalg::norm(&(s - &self.y))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SdmStepsize {
    Constant {
        gamma: f64,
    },
    /// `γ_k = 2 / (μω(a + k + 1))`
    TimeVarying {
        mu: f64,
        omega: f64,
        a: f64,
    },
}

impl SdmStepsize {
    pub fn gamma(&self, k: usize) -> f64 {
        match *self {
            SdmStepsize::Constant { gamma } => gamma,
            SdmStepsize::TimeVarying { mu, omega, a } => 2.0 / (mu * omega * (a + k as f64 + 1.0)),
        }
    }

    fn validate(&self) -> Result<()> {
        let ok = match *self {
            SdmStepsize::Constant { gamma } => gamma > 0.0 && gamma.is_finite(),
            SdmStepsize::TimeVarying { mu, omega, a } => mu > 0.0 && omega > 0.0 && a >= 0.0,
        };
        if ok {
            Ok(())
        } else {
            Err(OptError::InvalidParameter(format!("bad SDM stepsize {self:?}")))
        }
    }
}

/// One step given the estimate `v` and the sampled index `j`:
/// `z = prox_{γψ}(x - γv - γy)`, `x⁺ = prox_{η_j g_j}(z + η_j y_j)`,
/// `y_j⁺ = y_j + (z - x⁺)/η_j`, `y⁺ = y + (y_j⁺ - y_j)/m`.
pub fn sdm_step(
    psi: &ProxTerm,
    g: &[ProxTerm],
    x: &Array1<f64>,
    dual: &mut DualState,
    gamma: f64,
    v: &Array1<f64>,
    j: usize,
) -> Array1<f64> {
    let mut w = x.clone();
    w.scaled_add(-gamma, v);
    w.scaled_add(-gamma, &dual.y);
    let z = psi.prox(gamma, &w);
    if g.is_empty() {
        return z;
    }
    let eta = dual.eta(gamma, j);
    let mut u = z.clone();
    u.scaled_add(eta, &dual.ys[j]);
    let xn = g[j].prox(eta, &u);
    let delta = (&z - &xn) / eta;
    let inv_m = 1.0 / dual.m() as f64;
    dual.y.scaled_add(inv_m, &delta);
    dual.ys[j] += &delta;
    xn
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SdmOptions {
    pub estimator: EstimatorKind,
    #[serde(default = "one")]
    pub batch: usize,
    pub stepsize: SdmStepsize,
    #[serde(default)]
    pub probs: Option<Vec<f64>>,
    #[serde(default)]
    pub order: IndexOrder,
    pub steps: usize,
}

fn one() -> usize {
    1
}

/// Full-state SDM iterate.
#[derive(Clone, Debug)]
pub struct Sdm {
    pub x: Array1<f64>,
    pub dual: DualState,
    pub est: GradEstimator,
    sampler: IndexSampler,
    stepsize: SdmStepsize,
    pub k: usize,
    pub proxes: u64,
}

impl Sdm {
    pub fn new(
        f: &FiniteSumObjective,
        g: &[ProxTerm],
        opts: &SdmOptions,
        x0: &Array1<f64>,
        stream: &RngStream,
    ) -> Result<Self> {
        opts.stepsize.validate()?;
        if x0.len() != f.dim() {
            return Err(OptError::Dimension(format!(
                "x0 has length {}, objective has dimension {}",
                x0.len(),
                f.dim()
            )));
        }
        let dual = DualState::new(g.len(), f.dim(), opts.probs.clone())?;
        let sampler = IndexSampler::new(dual.probs(), opts.order, &stream.child("index"));
        let est = GradEstimator::new(opts.estimator, opts.batch, f, x0, &stream.child("estimator"))?;
        Ok(Sdm {
            x: x0.clone(),
            dual,
            est,
            sampler,
            stepsize: opts.stepsize,
            k: 0,
            proxes: 0,
        })
    }

    pub fn step(&mut self, f: &FiniteSumObjective, psi: &ProxTerm, g: &[ProxTerm]) {
        let gamma = self.stepsize.gamma(self.k);
        let v = self.est.next(f, &self.x);
        let j = if g.is_empty() { 0 } else { self.sampler.sample() };
        self.x = sdm_step(psi, g, &self.x, &mut self.dual, gamma, &v, j);
        self.proxes += u64::from(!psi.is_zero()) + u64::from(!g.is_empty());
        self.k += 1;
    }
}

fn composite_value(f: &FiniteSumObjective, psi: &ProxTerm, g: &[ProxTerm], x: &Array1<f64>) -> f64 {
    let gs: f64 = g.iter().map(|t| t.finite_value(x)).sum();
    let m = g.len().max(1) as f64;
    f.value(x) + psi.finite_value(x) + gs / m
}

/// Largest distance from `x` to the sets of the indicator terms.
pub fn infeasibility(g: &[ProxTerm], x: &Array1<f64>) -> f64 {
    g.iter()
        .filter(|t| t.is_indicator())
        .map(|t| linalg::dist_sq(x, &t.prox(1.0, x)).sqrt())
        .fold(0.0, f64::max)
}

fn diverged(x: &Array1<f64>) -> bool {
    x.iter().any(|v| !v.is_finite())
}

pub fn sdm_run(
    f: &FiniteSumObjective,
    psi: &ProxTerm,
    g: &[ProxTerm],
    opts: &SdmOptions,
    x0: &Array1<f64>,
    stream: &RngStream,
    reference: Option<&Reference>,
) -> Result<MetricTrace> {
    let mut s = Sdm::new(f, g, opts, x0, stream)?;
    let has_ind = g.iter().any(|t| t.is_indicator());
    let mut rec = Recorder::new(|x| composite_value(f, psi, g, x), reference);
    rec.counters.grads = s.est.grads;
    rec.record(0, x0);
    if has_ind {
        rec.trace.push_aux("infeasibility", infeasibility(g, x0));
    }
    for k in 1..=opts.steps {
        s.step(f, psi, g);
        if diverged(&s.x) {
            return Err(OptError::Numerical(format!("SDM diverged at step {k}")));
        }
        rec.counters.grads = s.est.grads;
        rec.counters.proxes = s.proxes;
        rec.record(k as u64, &s.x);
        if has_ind {
            rec.trace.push_aux("infeasibility", infeasibility(g, &s.x));
        }
    }
    Ok(rec.finish(s.x))
}

/// Memory-efficient SDM for `g_j = ι{a_j^T x = b_j}`: only the aggregate
/// dual is kept, `x⁺ = Π_j(z)`, `y⁺ = y + (p_j/γ)(z - x⁺)`.
#[derive(Clone, Debug)]
pub struct SdmLinear {
    pub x: Array1<f64>,
    pub y: Array1<f64>,
    pub est: GradEstimator,
    planes: Vec<ProxTerm>,
    probs: Vec<f64>,
    sampler: IndexSampler,
    stepsize: SdmStepsize,
    pub k: usize,
}

/// The hyperplanes `{x : a_j^T x = b_j}` for the rows of `a`.
pub fn hyperplanes(a: &Array2<f64>, b: &Array1<f64>) -> Result<Vec<ProxTerm>> {
    if a.nrows() != b.len() {
        return Err(OptError::Dimension(format!(
            "{} constraint rows but {} right-hand sides",
            a.nrows(),
            b.len()
        )));
    }
    a.rows()
        .into_iter()
        .zip(b.iter())
        .map(|(r, &bj)| ProxTerm::hyperplane(r.to_owned(), bj))
        .collect()
}

impl SdmLinear {
    pub fn new(
        f: &FiniteSumObjective,
        a: &Array2<f64>,
        b: &Array1<f64>,
        opts: &SdmOptions,
        x0: &Array1<f64>,
        stream: &RngStream,
    ) -> Result<Self> {
        opts.stepsize.validate()?;
        if a.ncols() != f.dim() && a.nrows() > 0 {
            return Err(OptError::Dimension("constraint matrix width".into()));
        }
        let planes = hyperplanes(a, b)?;
        let m = planes.len();
        let probs = match &opts.probs {
            Some(p) => {
                if p.len() != m {
                    return Err(OptError::Dimension(format!("{} probabilities for {m} rows", p.len())));
                }
                check_probs(p)?;
                p.clone()
            }
            None => vec![1.0 / m as f64; m],
        };
        let sampler = IndexSampler::new(&probs, opts.order, &stream.child("index"));
        let est = GradEstimator::new(opts.estimator, opts.batch, f, x0, &stream.child("estimator"))?;
        Ok(SdmLinear {
            x: x0.clone(),
            y: Array1::zeros(f.dim()),
            est,
            planes,
            probs,
            sampler,
            stepsize: opts.stepsize,
            k: 0,
        })
    }

    pub fn step(&mut self, f: &FiniteSumObjective, psi: &ProxTerm) {
        let gamma = self.stepsize.gamma(self.k);
        let v = self.est.next(f, &self.x);
        let mut w = self.x.clone();
        w.scaled_add(-gamma, &v);
        w.scaled_add(-gamma, &self.y);
        let z = psi.prox(gamma, &w);
        if self.planes.is_empty() {
            self.x = z;
        } else {
            let j = self.sampler.sample();
            let xn = self.planes[j].prox(1.0, &z);
            self.y.scaled_add(self.probs[j] / gamma, &(&z - &xn));
            self.x = xn;
        }
        self.k += 1;
    }
}

pub fn sdm_linear_run(
    f: &FiniteSumObjective,
    psi: &ProxTerm,
    a: &Array2<f64>,
    b: &Array1<f64>,
    opts: &SdmOptions,
    x0: &Array1<f64>,
    stream: &RngStream,
    reference: Option<&Reference>,
) -> Result<MetricTrace> {
    let mut s = SdmLinear::new(f, a, b, opts, x0, stream)?;
    let planes = s.planes.clone();
    let mut rec = Recorder::new(|x| f.value(x) + psi.finite_value(x), reference);
    rec.counters.grads = s.est.grads;
    rec.record(0, x0);
    rec.trace.push_aux("infeasibility", infeasibility(&planes, x0));
    let per_step = u64::from(!psi.is_zero()) + u64::from(!planes.is_empty());
    for k in 1..=opts.steps {
        s.step(f, psi);
        if diverged(&s.x) {
            return Err(OptError::Numerical(format!("SDM diverged at step {k}")));
        }
        rec.counters.grads = s.est.grads;
        rec.counters.proxes += per_step;
        rec.record(k as u64, &s.x);
        rec.trace.push_aux("infeasibility", infeasibility(&planes, &s.x));
    }
    Ok(rec.finish(s.x))
}

/// Classical randomized Kaczmarz `x⁺ = Π_j(x)` on the rows of `a x = b`.
/// Returns `x^0, ..., x^steps`.
pub fn kaczmarz_iterates(
    a: &Array2<f64>,
    b: &Array1<f64>,
    x0: &Array1<f64>,
    steps: usize,
    order: IndexOrder,
    stream: &RngStream,
) -> Result<Vec<Array1<f64>>> {
    let planes = hyperplanes(a, b)?;
    let m = planes.len();
    if m == 0 {
        return Err(OptError::InvalidParameter("Kaczmarz needs at least one row".into()));
    }
    let mut sampler = IndexSampler::new(&vec![1.0 / m as f64; m], order, &stream.child("index"));
    let mut xs = vec![x0.clone()];
    let mut x = x0.clone();
    for _ in 0..steps {
        x = planes[sampler.sample()].prox(1.0, &x);
        xs.push(x.clone());
    }
    Ok(xs)
}

/// SDM with `f = ½‖x - x0‖²`, `ψ = 0`, `γ = 1/m`, `y⁰ = 0` and hyperplane
/// terms. Returns `x^0, ..., x^steps`.
pub fn sdm_kaczmarz_iterates(
    a: &Array2<f64>,
    b: &Array1<f64>,
    x0: &Array1<f64>,
    steps: usize,
    order: IndexOrder,
    stream: &RngStream,
) -> Result<Vec<Array1<f64>>> {
    let g = hyperplanes(a, b)?;
    let m = g.len();
    if m == 0 {
        return Err(OptError::InvalidParameter("Kaczmarz needs at least one row".into()));
    }
    let f = make_quadratic_distance(x0.clone());
    let opts = SdmOptions {
        estimator: EstimatorKind::FullGd,
        batch: 1,
        stepsize: SdmStepsize::Constant { gamma: 1.0 / m as f64 },
        probs: None,
        order,
        steps,
    };
    let mut s = Sdm::new(&f, &g, &opts, x0, stream)?;
    let psi = ProxTerm::zero();
    let mut xs = vec![x0.clone()];
    for _ in 0..steps {
        s.step(&f, &psi, &g);
        xs.push(s.x.clone());
    }
    Ok(xs)
}

fn iterates_trace(xs: Vec<Array1<f64>>, reference: Option<&Reference>, grads_per_step: u64) -> MetricTrace {
    let mut rec = Recorder::new(|_| f64::NAN, reference);
    for (k, x) in xs.iter().enumerate() {
        rec.counters.grads = grads_per_step * k as u64;
        rec.counters.proxes = k as u64;
        rec.record(k as u64, x);
    }
    let last = xs.last().cloned().unwrap_or_else(|| Array1::zeros(0));
    let mut t = rec.finish(last);
    // the objective of a feasibility problem is 0 on the solution set
    if reference.is_some() {
        for r in &mut t.rows {
            r.f_gap = 0.0;
        }
    }
    t
}

pub fn sdm_kaczmarz_mode(
    a: &Array2<f64>,
    b: &Array1<f64>,
    x0: &Array1<f64>,
    steps: usize,
    order: IndexOrder,
    stream: &RngStream,
    reference: Option<&Reference>,
) -> Result<MetricTrace> {
    let xs = sdm_kaczmarz_iterates(a, b, x0, steps, order, stream)?;
    Ok(iterates_trace(xs, reference, 1))
}

pub fn randomized_kaczmarz(
    a: &Array2<f64>,
    b: &Array1<f64>,
    x0: &Array1<f64>,
    steps: usize,
    order: IndexOrder,
    stream: &RngStream,
    reference: Option<&Reference>,
) -> Result<MetricTrace> {
    let xs = kaczmarz_iterates(a, b, x0, steps, order, stream)?;
    Ok(iterates_trace(xs, reference, 0))
}
