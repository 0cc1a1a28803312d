//! Primal-dual solvers for `min f(x) + ψ(x) + H(Lx)`.

use ndarray::Array1;
use serde::{Deserialize, Serialize};

use super::estimator::{EstimatorKind, GradEstimator};
use super::linop::{spectral_norm, LinOp};
use crate::error::{OptError, Result};
use crate::harness::trace::{MetricTrace, Recorder, Reference};
use crate::linalg;
use crate::problems::FiniteSumObjective;
use crate::prox::ProxTerm;
use crate::rng::RngStream;

/// Slack on the non-strict stepsize conditions, covering the power
/// iteration error in `‖L‖`.
const COND_SLACK: f64 = 1e-9;

/// `prox_{τH*}(y) = y - τ prox_{H/τ}(y/τ)`
pub fn prox_conj(h: &ProxTerm, tau: f64, y: &Array1<f64>) -> Array1<f64> {
    if h.is_zero() {
        return Array1::zeros(y.len());
    }
    let inner = h.prox(1.0 / tau, &(y / tau));
    y - &(inner * tau)
}

/// The data of `min f(x) + ψ(x) + H(Lx)`.
#[derive(Clone, Copy, Debug)]
pub struct PdProblem<'a> {
    pub f: &'a FiniteSumObjective,
    pub psi: &'a ProxTerm,
    pub h: &'a ProxTerm,
    pub l: &'a LinOp,
}

impl PdProblem<'_> {
    pub fn value(&self, x: &Array1<f64>) -> f64 {
        let hv = if self.h.is_zero() {
            0.0
        } else {
            self.h.finite_value(&self.l.apply(x))
        };
        self.f.value(x) + self.psi.finite_value(x) + hv
    }

    /// Distance from `Lx` to `dom H` when `H` is an indicator, else 0.
    pub fn infeasibility(&self, x: &Array1<f64>) -> f64 {
        if !self.h.is_indicator() {
            return 0.0;
        }
        let lx = self.l.apply(x);
        linalg::dist_sq(&lx, &self.h.prox(1.0, &lx)).sqrt()
    }

    fn check_dims(&self, x0: &Array1<f64>) -> Result<()> {
        if self.l.cols() != self.f.dim() || x0.len() != self.f.dim() {
            return Err(OptError::Dimension(format!(
                "objective dimension {}, operator has {} columns, x0 has length {}",
                self.f.dim(),
                self.l.cols(),
                x0.len()
            )));
        }
        Ok(())
    }
}

/// How PDDY builds `p⁰` from `x⁰`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PddyInit {
    /// `p⁰ = x⁰ - γ g⁰` with one estimator call at `x⁰`; this aligns the
    /// PDDY primal sequence with LiCoSGD started at `x⁰`.
    #[default]
    FromPrimal,
    /// `p⁰ = x⁰`
    Direct,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PdOptions {
    /// primal stepsize
    pub gamma: f64,
    /// dual stepsize
    pub tau: f64,
    pub estimator: EstimatorKind,
    #[serde(default = "one")]
    pub batch: usize,
    pub steps: usize,
    #[serde(default)]
    pub init: PddyInit,
}

fn one() -> usize {
    1
}

/// `γ, τ > 0`, `γτ‖L‖² < 1` (strict) or `≤ 1`, and `γ < 2/ν` for
/// deterministic gradients.
pub fn check_stepsizes(
    gamma: f64,
    tau: f64,
    l_norm: f64,
    strict: bool,
    estimator: EstimatorKind,
    nu: f64,
) -> Result<()> {
    if !(gamma > 0.0 && gamma.is_finite() && tau > 0.0 && tau.is_finite()) {
        return Err(OptError::InvalidParameter(format!(
            "stepsizes must be positive, got gamma={gamma}, tau={tau}"
        )));
    }
    let prod = gamma * tau * l_norm * l_norm;
    let ok = if strict { prod < 1.0 } else { prod <= 1.0 + COND_SLACK };
    if !ok {
        let rel = if strict { "<" } else { "<=" };
        return Err(OptError::StepsizeCondition(format!(
            "gamma*tau*|L|^2 = {prod} must be {rel} 1"
        )));
    }
    if estimator.is_deterministic() && gamma * nu >= 2.0 {
        return Err(OptError::StepsizeCondition(format!(
            "gamma = {gamma} must be below 2/L = {}",
            2.0 / nu
        )));
    }
    Ok(())
}

fn diverged(x: &Array1<f64>) -> bool {
    x.iter().any(|v| !v.is_finite())
}

/// `v = y + τ L(p - γ L* y)`
fn dual_argument(l: &LinOp, y: &Array1<f64>, p: &Array1<f64>, gamma: f64, tau: f64) -> Array1<f64> {
    let mut q = p.clone();
    q.scaled_add(-gamma, &l.adjoint(y));
    let mut v = y.clone();
    v.scaled_add(tau, &l.apply(&q));
    v
}

/// Stochastic PDDY:
/// `y⁺ = prox_{τH*}(y + τL(p - γL*y))`, `x = p - γL*y⁺`,
/// `s = prox_{γψ}(2x - p - γg(x))`, `p⁺ = p + s - x`.
#[derive(Clone, Debug)]
pub struct Pddy {
    pub p: Array1<f64>,
    pub y: Array1<f64>,
    pub x: Array1<f64>,
    pub est: GradEstimator,
    gamma: f64,
    tau: f64,
    pub proxes: u64,
}

impl Pddy {
    pub fn new(prob: &PdProblem, opts: &PdOptions, x0: &Array1<f64>, stream: &RngStream) -> Result<Self> {
        prob.check_dims(x0)?;
        check_stepsizes(
            opts.gamma,
            opts.tau,
            spectral_norm(prob.l),
            true,
            opts.estimator,
            prob.f.smoothness(),
        )?;
        let mut est = GradEstimator::new(opts.estimator, opts.batch, prob.f, x0, &stream.child("estimator"))?;
        let p = match opts.init {
            PddyInit::Direct => x0.clone(),
            PddyInit::FromPrimal => {
                let g = est.next(prob.f, x0);
                let mut p = x0.clone();
                p.scaled_add(-opts.gamma, &g);
                p
            }
        };
        Ok(Pddy {
            p,
            y: Array1::zeros(prob.l.rows()),
            x: x0.clone(),
            est,
            gamma: opts.gamma,
            tau: opts.tau,
            proxes: 0,
        })
    }

    /// Dual update and `x^k`.
    pub fn half_step(&mut self, prob: &PdProblem) {
        let v = dual_argument(prob.l, &self.y, &self.p, self.gamma, self.tau);
        self.y = prox_conj(prob.h, self.tau, &v);
        self.proxes += u64::from(!prob.h.is_zero());
        let mut x = self.p.clone();
        x.scaled_add(-self.gamma, &prob.l.adjoint(&self.y));
        self.x = x;
    }

    /// Gradient step at `x^k` and `p^{k+1}`.
    pub fn finish_step(&mut self, prob: &PdProblem) {
        let g = self.est.next(prob.f, &self.x);
        if prob.psi.is_zero() {
            let mut p = self.x.clone();
            p.scaled_add(-self.gamma, &g);
            self.p = p;
        } else {
            let mut u = &self.x * 2.0 - &self.p;
            u.scaled_add(-self.gamma, &g);
            let s = prob.psi.prox(self.gamma, &u);
            self.proxes += 1;
            self.p = &self.p + &s - &self.x;
        }
    }
}

fn start_recorder<'a>(prob: &'a PdProblem<'a>, reference: Option<&'a Reference>) -> Recorder<'a> {
    Recorder::new(move |x| prob.value(x), reference)
}

fn record_pd(rec: &mut Recorder, prob: &PdProblem, k: usize, x: &Array1<f64>, grads: u64, proxes: u64) {
    rec.counters.grads = grads;
    rec.counters.proxes = proxes;
    rec.record(k as u64, x);
    if prob.h.is_indicator() {
        rec.trace.push_aux("infeasibility", prob.infeasibility(x));
    }
}

/// Rows `0..=K`: row 0 is `x⁰`, row `k+1` is the PDDY primal iterate
/// `x^k`.
pub fn pddy_run(
    prob: &PdProblem,
    opts: &PdOptions,
    x0: &Array1<f64>,
    stream: &RngStream,
    reference: Option<&Reference>,
) -> Result<MetricTrace> {
    let mut rec = start_recorder(prob, reference);
    let grads0 = if matches!(opts.estimator, EstimatorKind::FullGd | EstimatorKind::Sgd) {
        0
    } else {
        prob.f.n() as u64
    };
    record_pd(&mut rec, prob, 0, x0, grads0, 0);
    let mut s = Pddy::new(prob, opts, x0, stream)?;
    for k in 0..opts.steps {
        s.half_step(prob);
        if diverged(&s.x) {
            return Err(OptError::Numerical(format!("PDDY diverged at step {k}")));
        }
        record_pd(&mut rec, prob, k + 1, &s.x, s.est.grads, s.proxes);
        if k + 1 < opts.steps {
            s.finish_step(prob);
        }
    }
    let x = s.x.clone();
    Ok(rec.finish(x))
}

/// Stochastic PD3O:
/// `x = prox_{γψ}(p)`, `w = 2x - p - γg(x)`,
/// `y⁺ = prox_{τH*}(y + τL(w - γL*y))`, `p⁺ = x - γg - γL*y⁺`.
#[derive(Clone, Debug)]
pub struct Pd3o {
    pub p: Array1<f64>,
    pub y: Array1<f64>,
    pub x: Array1<f64>,
    pub est: GradEstimator,
    gamma: f64,
    tau: f64,
    pub proxes: u64,
}

impl Pd3o {
    pub fn new(prob: &PdProblem, opts: &PdOptions, x0: &Array1<f64>, stream: &RngStream) -> Result<Self> {
        prob.check_dims(x0)?;
        check_stepsizes(
            opts.gamma,
            opts.tau,
            spectral_norm(prob.l),
            false,
            opts.estimator,
            prob.f.smoothness(),
        )?;
        let est = GradEstimator::new(opts.estimator, opts.batch, prob.f, x0, &stream.child("estimator"))?;
        let mut s = Pd3o {
            p: x0.clone(),
            y: Array1::zeros(prob.l.rows()),
            x: x0.clone(),
            est,
            gamma: opts.gamma,
            tau: opts.tau,
            proxes: 0,
        };
        s.primal(prob);
        Ok(s)
    }

    fn primal(&mut self, prob: &PdProblem) {
        if prob.psi.is_zero() {
            self.x = self.p.clone();
        } else {
            self.x = prob.psi.prox(self.gamma, &self.p);
            self.proxes += 1;
        }
    }

    /// `(p^k, y^k) -> (p^{k+1}, y^{k+1})` and `x^{k+1} = prox_{γψ}(p^{k+1})`.
    pub fn step(&mut self, prob: &PdProblem) {
        let g = self.est.next(prob.f, &self.x);
        let mut t = self.x.clone();
        t.scaled_add(-self.gamma, &g);
        let w = if prob.psi.is_zero() {
            t.clone()
        } else {
            let mut w = &self.x * 2.0 - &self.p;
            w.scaled_add(-self.gamma, &g);
            w
        };
        let v = dual_argument(prob.l, &self.y, &w, self.gamma, self.tau);
        self.y = prox_conj(prob.h, self.tau, &v);
        self.proxes += u64::from(!prob.h.is_zero());
        t.scaled_add(-self.gamma, &prob.l.adjoint(&self.y));
        self.p = t;
        self.primal(prob);
    }
}

pub fn pd3o_run(
    prob: &PdProblem,
    opts: &PdOptions,
    x0: &Array1<f64>,
    stream: &RngStream,
    reference: Option<&Reference>,
) -> Result<MetricTrace> {
    let mut s = Pd3o::new(prob, opts, x0, stream)?;
    let mut rec = start_recorder(prob, reference);
    record_pd(&mut rec, prob, 0, &s.x, s.est.grads, s.proxes);
    for k in 1..=opts.steps {
        s.step(prob);
        if diverged(&s.x) {
            return Err(OptError::Numerical(format!("PD3O diverged at step {k}")));
        }
        record_pd(&mut rec, prob, k, &s.x, s.est.grads, s.proxes);
    }
    let x = s.x.clone();
    Ok(rec.finish(x))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum CvForm {
    /// primal first:
    /// `x^k = prox_{τψ}(x^{k-1} - τ∇f(x^{k-1}) - τL*h^k)`,
    /// `h^{k+1} = prox_{γH*}(h^k + γL(2x^k - x^{k-1}))`
    I,
    /// dual first:
    /// `y^k = prox_{γH*}(y^{k-1} + γLx^k)`,
    /// `x^{k+1} = prox_{τψ}(x^k - τ∇f(x^k) - τL*(2y^k - y^{k-1}))`
    II,
}

/// Condat-Vũ with deterministic gradients. Here `tau` is the primal and
/// `gamma` the dual stepsize; requires `ν/2 < 1/τ - γ‖L‖²`.
pub fn condat_vu_run(
    prob: &PdProblem,
    tau: f64,
    gamma: f64,
    steps: usize,
    form: CvForm,
    x0: &Array1<f64>,
    reference: Option<&Reference>,
) -> Result<MetricTrace> {
    prob.check_dims(x0)?;
    if !(tau > 0.0 && gamma > 0.0) {
        return Err(OptError::InvalidParameter(
            "Condat-Vu stepsizes must be positive".into(),
        ));
    }
    let ln = spectral_norm(prob.l);
    let nu = prob.f.smoothness();
    if nu / 2.0 >= 1.0 / tau - gamma * ln * ln {
        return Err(OptError::StepsizeCondition(format!(
            "need L_f/2 < 1/tau - gamma*|L|^2, got {} >= {}",
            nu / 2.0,
            1.0 / tau - gamma * ln * ln
        )));
    }
    let n = prob.f.n() as u64;
    let per_step = u64::from(!prob.psi.is_zero()) + u64::from(!prob.h.is_zero());
    let mut rec = start_recorder(prob, reference);
    record_pd(&mut rec, prob, 0, x0, 0, 0);
    let mut x = x0.clone();
    let mut dual = Array1::zeros(prob.l.rows());
    let mut prev_dual = dual.clone();
    for k in 1..=steps {
        match form {
            CvForm::I => {
                let mut u = x.clone();
                u.scaled_add(-tau, &prob.f.grad(&x));
                u.scaled_add(-tau, &prob.l.adjoint(&dual));
                let xn = prob.psi.prox(tau, &u);
                let mut v = dual.clone();
                v.scaled_add(gamma, &prob.l.apply(&(&xn * 2.0 - &x)));
                dual = prox_conj(prob.h, gamma, &v);
                x = xn;
            }
            CvForm::II => {
                let mut v = prev_dual.clone();
                v.scaled_add(gamma, &prob.l.apply(&x));
                dual = prox_conj(prob.h, gamma, &v);
                let mut u = x.clone();
                u.scaled_add(-tau, &prob.f.grad(&x));
                u.scaled_add(-tau, &prob.l.adjoint(&(&dual * 2.0 - &prev_dual)));
                x = prob.psi.prox(tau, &u);
                prev_dual = dual.clone();
            }
        }
        if diverged(&x) {
            return Err(OptError::Numerical(format!("Condat-Vu diverged at step {k}")));
        }
        record_pd(&mut rec, prob, k, &x, n * k as u64, per_step * k as u64);
    }
    Ok(rec.finish(x))
}

fn check_in_range(l: &LinOp, v: &Array1<f64>, what: &str) -> Result<()> {
    if l.is_zero() {
        if linalg::norm(v) > 0.0 {
            return Err(OptError::Domain(format!("{what} is not in the range of L = 0")));
        }
        return Ok(());
    }
    let r = linalg::range_residual(&l.to_dense(), v);
    if r > 1e-8 * (1.0 + linalg::norm(v)) {
        return Err(OptError::Domain(format!(
            "{what} is not in the range of L (residual {r:e})"
        )));
    }
    Ok(())
}

/// LiCoSGD for `min f(x)` s.t. `Lx = b`:
/// `w = x - γg`, `y⁺ = y + τL(w - γL*y) - τb`, `x⁺ = w - γL*y⁺`.
#[derive(Clone, Debug)]
pub struct LiCoSgd {
    pub x: Array1<f64>,
    pub y: Array1<f64>,
    gamma: f64,
    tau: f64,
}

impl LiCoSgd {
    pub fn new(x0: Array1<f64>, y0: Array1<f64>, gamma: f64, tau: f64) -> Self {
        LiCoSgd {
            x: x0,
            y: y0,
            gamma,
            tau,
        }
    }

    pub fn step(&mut self, g: &Array1<f64>, l: &LinOp, b: &Array1<f64>) {
        let mut w = self.x.clone();
        w.scaled_add(-self.gamma, g);
        let v = dual_argument(l, &self.y, &w, self.gamma, self.tau);
        self.y = &v - &(b.clone() * self.tau);
        w.scaled_add(-self.gamma, &l.adjoint(&self.y));
        self.x = w;
    }
}

/// PriLiCoSGD, LiCoSGD written in `a = L*y` with `W = L*L`, `c = L*b`:
/// `t = x - γg`, `a⁺ = a + τW(t - γa) - τc`, `x⁺ = t - γa⁺`.
#[derive(Clone, Debug)]
pub struct PriLiCoSgd {
    pub x: Array1<f64>,
    pub a: Array1<f64>,
    gamma: f64,
    tau: f64,
}

impl PriLiCoSgd {
    pub fn new(x0: Array1<f64>, a0: Array1<f64>, gamma: f64, tau: f64) -> Self {
        PriLiCoSgd {
            x: x0,
            a: a0,
            gamma,
            tau,
        }
    }

    pub fn step(&mut self, g: &Array1<f64>, w: &LinOp, c: &Array1<f64>) {
        let mut t = self.x.clone();
        t.scaled_add(-self.gamma, g);
        let mut u = t.clone();
        u.scaled_add(-self.gamma, &self.a);
        let mut a = self.a.clone();
        a.scaled_add(self.tau, &w.apply(&u));
        a.scaled_add(-self.tau, c);
        t.scaled_add(-self.gamma, &a);
        self.a = a;
        self.x = t;
    }
}

fn lico_trace<S>(
    f: &FiniteSumObjective,
    opts: &PdOptions,
    x0: &Array1<f64>,
    stream: &RngStream,
    reference: Option<&Reference>,
    residual: impl Fn(&Array1<f64>) -> f64,
    mut step: S,
) -> Result<MetricTrace>
where
    S: FnMut(&Array1<f64>) -> Array1<f64>,
{
    let mut est = GradEstimator::new(opts.estimator, opts.batch, f, x0, &stream.child("estimator"))?;
    let mut rec = Recorder::new(|x| f.value(x), reference);
    rec.counters.grads = est.grads;
    rec.record(0, x0);
    rec.trace.push_aux("infeasibility", residual(x0));
    let mut x = x0.clone();
    for k in 1..=opts.steps {
        let g = est.next(f, &x);
        x = step(&g);
        if diverged(&x) {
            return Err(OptError::Numerical(format!("LiCoSGD diverged at step {k}")));
        }
        rec.counters.grads = est.grads;
        rec.record(k as u64, &x);
        rec.trace.push_aux("infeasibility", residual(&x));
    }
    Ok(rec.finish(x))
}

/// `y0` defaults to 0 and must lie in `Range(L)`; `b` must lie in
/// `Range(L)`; `γτ‖L‖² ≤ 1`. The aux series `infeasibility` is `‖Lx - b‖`.
#[allow(clippy::too_many_arguments)]
pub fn licosgd_run(
    f: &FiniteSumObjective,
    l: &LinOp,
    b: &Array1<f64>,
    opts: &PdOptions,
    x0: &Array1<f64>,
    y0: Option<&Array1<f64>>,
    stream: &RngStream,
    reference: Option<&Reference>,
) -> Result<MetricTrace> {
    if l.cols() != f.dim() || l.rows() != b.len() || x0.len() != f.dim() {
        return Err(OptError::Dimension("LiCoSGD operator, b and x0 shapes".into()));
    }
    check_stepsizes(
        opts.gamma,
        opts.tau,
        spectral_norm(l),
        false,
        opts.estimator,
        f.smoothness(),
    )?;
    check_in_range(l, b, "b")?;
    let y0 = match y0 {
        Some(y) => {
            check_in_range(l, y, "y0")?;
            y.clone()
        }
        None => Array1::zeros(l.rows()),
    };
    let mut s = LiCoSgd::new(x0.clone(), y0, opts.gamma, opts.tau);
    lico_trace(
        f,
        opts,
        x0,
        stream,
        reference,
        |x| linalg::norm(&(l.apply(x) - b)),
        |g| {
            s.step(g, l, b);
            s.x.clone()
        },
    )
}

/// PriLiCoSGD with `W = L*L` and `c = L*b` given directly; requires
/// `γτ‖W‖ ≤ 1`. The aux series `infeasibility` is `‖Wx - c‖`.
#[allow(clippy::too_many_arguments)]
pub fn prilicosgd_run(
    f: &FiniteSumObjective,
    w: &LinOp,
    c: &Array1<f64>,
    opts: &PdOptions,
    x0: &Array1<f64>,
    a0: Option<&Array1<f64>>,
    stream: &RngStream,
    reference: Option<&Reference>,
) -> Result<MetricTrace> {
    if w.cols() != f.dim() || w.rows() != f.dim() || c.len() != f.dim() || x0.len() != f.dim() {
        return Err(OptError::Dimension("PriLiCoSGD operator, c and x0 shapes".into()));
    }
    let wn = spectral_norm(w);
    check_stepsizes(opts.gamma, opts.tau, wn.sqrt(), false, opts.estimator, f.smoothness())?;
    check_in_range(w, c, "c")?;
    let a0 = a0.cloned().unwrap_or_else(|| Array1::zeros(f.dim()));
    let mut s = PriLiCoSgd::new(x0.clone(), a0, opts.gamma, opts.tau);
    lico_trace(
        f,
        opts,
        x0,
        stream,
        reference,
        |x| linalg::norm(&(w.apply(x) - c)),
        |g| {
            s.step(g, w, c);
            s.x.clone()
        },
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::{self as generators, make_least_squares, make_logistic, reference_solution};

    fn lsq(d: usize, seed: u64) -> FiniteSumObjective {
        let s = RngStream::new(seed);
        let a = generators::gaussian_matrix(2 * d, d, &s);
        let b = generators::gaussian_vector(2 * d, &s.child("b"));
        make_least_squares(a, b, 0.1).unwrap()
    }

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
    fn moreau_conjugate_prox() {
        // H = λ|.|_1 gives H* = indicator of the λ-box, prox = clamp
        let h = ProxTerm::l1(0.7).unwrap();
        let y = Array1::from(vec![2.0, -0.3, -5.0, 0.69]);
        let p = prox_conj(&h, 1.3, &y);
        let want = y.mapv(|v| v.clamp(-0.7, 0.7));
        assert!(linalg::dist_sq(&p, &want) <= 1e-28);
    }

    #[test]
    fn zero_operator_is_proximal_gradient() {
        let f = lsq(5, 1);
        let psi = ProxTerm::l1(0.05).unwrap();
        let h = ProxTerm::zero();
        let l = LinOp::Zero { rows: 2, cols: 5 };
        let prob = PdProblem {
            f: &f,
            psi: &psi,
            h: &h,
            l: &l,
        };
        let gamma = 0.5 / f.smoothness();
        let x0 = Array1::ones(5);
        let t = pd3o_run(
            &prob,
            &opts(gamma, 1.0, EstimatorKind::FullGd, 5),
            &x0,
            &RngStream::new(0),
            None,
        )
        .unwrap();
        let mut x = psi.prox(gamma, &x0);
        for _ in 0..5 {
            let mut u = x.clone();
            u.scaled_add(-gamma, &f.grad(&x));
            x = psi.prox(gamma, &u);
        }
        assert!(linalg::dist_sq(t.final_x.as_ref().unwrap(), &x) <= 1e-26);
        let mut o = opts(gamma, 1.0, EstimatorKind::FullGd, 6);
        o.init = PddyInit::Direct;
        let t = pddy_run(&prob, &o, &x0, &RngStream::new(0), None).unwrap();
        // PDDY x^k = p^k and p^{k+1} = prox(x^k - γ∇f(x^k)): x^5 = 5 prox-grad steps from x0
        let mut x = x0.clone();
        for _ in 0..5 {
            let mut u = x.clone();
            u.scaled_add(-gamma, &f.grad(&x));
            x = psi.prox(gamma, &u);
        }
        assert!(linalg::dist_sq(t.final_x.as_ref().unwrap(), &x) <= 1e-26);
    }

    fn constrained(d: usize, r: usize, seed: u64) -> (FiniteSumObjective, LinOp, Array1<f64>) {
        let f = lsq(d, seed);
        let s = RngStream::new(seed).child("constraint");
        let l = LinOp::Dense(generators::gaussian_matrix(r, d, &s));
        let b = l.apply(&generators::gaussian_vector(d, &s.child("x")));
        (f, l, b)
    }

    #[test]
    fn pddy_pd3o_reduce_to_licosgd() {
        let (f, l, b) = constrained(6, 2, 3);
        let psi = ProxTerm::zero();
        let h = ProxTerm::point(b.clone());
        let prob = PdProblem {
            f: &f,
            psi: &psi,
            h: &h,
            l: &l,
        };
        let ln = spectral_norm(&l);
        let gamma = 1.0 / f.smoothness();
        let tau = 0.9 / (gamma * ln * ln);
        for est in [EstimatorKind::FullGd, EstimatorKind::Saga, EstimatorKind::Sgd] {
            let o = opts(gamma * 0.5, tau, est, 200);
            let x0 = Array1::zeros(6);
            let s = RngStream::new(4);
            let a = pddy_run(&prob, &o, &x0, &s, None).unwrap();
            let c = pd3o_run(&prob, &o, &x0, &s, None).unwrap();
            let e = licosgd_run(&f, &l, &b, &o, &x0, None, &s, None).unwrap();
            assert_eq!(a.final_x, e.final_x, "{est:?} pddy");
            assert_eq!(c.final_x, e.final_x, "{est:?} pd3o");
            for ((ra, rc), re) in a.rows.iter().zip(&c.rows).zip(&e.rows) {
                assert_eq!(ra.grads, re.grads);
                assert_eq!(rc.grads, re.grads);
            }
        }
    }

    #[test]
    fn licosgd_identity_constraint() {
        let f = lsq(4, 5);
        let xbar = Array1::from(vec![1.0, -2.0, 0.5, 3.0]);
        let l = LinOp::Identity(4);
        let gamma = 1.0 / f.smoothness();
        let t = licosgd_run(
            &f,
            &l,
            &xbar,
            &opts(gamma, 1.0 / gamma, EstimatorKind::FullGd, 2000),
            &Array1::zeros(4),
            None,
            &RngStream::new(0),
            None,
        )
        .unwrap();
        assert!(linalg::dist_sq(t.final_x.as_ref().unwrap(), &xbar) <= 1e-12);
    }

    #[test]
    fn prilicosgd_matches_licosgd() {
        let (f, l, b) = constrained(7, 3, 9);
        let w = l.gram();
        let c = l.adjoint(&b);
        let ln = spectral_norm(&l);
        let gamma = 0.5 / f.smoothness();
        let o = opts(gamma, 1.0 / (gamma * ln * ln), EstimatorKind::Lsvrg { p: None }, 300);
        let x0 = Array1::zeros(7);
        let s = RngStream::new(1);
        let a = licosgd_run(&f, &l, &b, &o, &x0, None, &s, None).unwrap();
        let p = prilicosgd_run(&f, &w, &c, &o, &x0, None, &s, None).unwrap();
        for (ra, rp) in a.rows.iter().zip(&p.rows) {
            assert!((ra.grads == rp.grads));
        }
        let d = linalg::dist_sq(a.final_x.as_ref().unwrap(), p.final_x.as_ref().unwrap()).sqrt();
        assert!(d <= 1e-12, "{d}");
    }

    #[test]
    fn licosgd_rejects_inconsistent_b() {
        let f = lsq(4, 2);
        let l = LinOp::Dense(ndarray::arr2(&[[1.0, 0.0, 0.0, 0.0], [2.0, 0.0, 0.0, 0.0]]));
        let b = Array1::from(vec![1.0, 1.0]);
        let r = licosgd_run(
            &f,
            &l,
            &b,
            &opts(0.1, 0.1, EstimatorKind::FullGd, 5),
            &Array1::zeros(4),
            None,
            &RngStream::new(0),
            None,
        );
        assert!(matches!(r, Err(OptError::Domain(_))));
    }

    #[test]
    fn stepsize_conditions() {
        let (f, l, b) = constrained(5, 2, 1);
        let psi = ProxTerm::zero();
        let h = ProxTerm::point(b.clone());
        let prob = PdProblem {
            f: &f,
            psi: &psi,
            h: &h,
            l: &l,
        };
        let ln = spectral_norm(&l);
        let gamma = 0.5 / f.smoothness();
        let tau = 1.0 / (gamma * ln * ln);
        let o = opts(gamma, tau, EstimatorKind::FullGd, 3);
        let x0 = Array1::zeros(5);
        let s = RngStream::new(0);
        assert!(matches!(
            pddy_run(&prob, &o, &x0, &s, None),
            Err(OptError::StepsizeCondition(_))
        ));
        assert!(pd3o_run(&prob, &o, &x0, &s, None).is_ok());
        assert!(licosgd_run(&f, &l, &b, &o, &x0, None, &s, None).is_ok());
        let big = opts(2.5 / f.smoothness(), 1e-6, EstimatorKind::FullGd, 3);
        assert!(matches!(
            pd3o_run(&prob, &big, &x0, &s, None),
            Err(OptError::StepsizeCondition(_))
        ));
        assert!(matches!(
            condat_vu_run(&prob, 2.0 / f.smoothness(), 0.1, 3, CvForm::I, &x0, None),
            Err(OptError::StepsizeCondition(_))
        ));
    }

    #[test]
    fn fused_lasso_agreement() {
        let d = 30;
        let s = RngStream::new(77);
        let a = generators::gaussian_matrix(40, d, &s);
        let bb = generators::gaussian_vector(40, &s.child("b"));
        let f = make_least_squares(a, bb, 0.05).unwrap();
        let (l1, l2) = (0.02, 0.1);
        let (_, fstar) = reference_solution(&f, &ProxTerm::fused_lasso(l1, l2).unwrap(), 1e-12).unwrap();
        let psi = ProxTerm::l1(l1).unwrap();
        let h = ProxTerm::l1(l2).unwrap();
        let l = LinOp::Difference(d);
        let prob = PdProblem {
            f: &f,
            psi: &psi,
            h: &h,
            l: &l,
        };
        let ln2 = spectral_norm(&l).powi(2);
        let gamma = 1.0 / f.smoothness();
        let o = opts(gamma, 0.99 / (gamma * ln2), EstimatorKind::FullGd, 5000);
        let x0 = Array1::zeros(d);
        let st = RngStream::new(0);
        for t in [
            pddy_run(&prob, &o, &x0, &st, None).unwrap(),
            pd3o_run(&prob, &o, &x0, &st, None).unwrap(),
            condat_vu_run(
                &prob,
                1.0 / f.smoothness(),
                0.49 * f.smoothness() / ln2,
                5000,
                CvForm::I,
                &x0,
                None,
            )
            .unwrap(),
            condat_vu_run(
                &prob,
                1.0 / f.smoothness(),
                0.49 * f.smoothness() / ln2,
                5000,
                CvForm::II,
                &x0,
                None,
            )
            .unwrap(),
        ] {
            let v = prob.value(t.final_x.as_ref().unwrap());
            assert!((v - fstar).abs() <= 1e-6, "{v} vs {fstar}");
        }
    }

    #[test]
    fn chambolle_pock_saddle_toy() {
        // f = 0, ψ = ½‖x‖², H = |.|_1, L = [[1, 1]], started away from x* = 0
        let f = crate::problems::make_linear_sum(vec![Array1::zeros(2)]).unwrap();
        let c = Array1::from(vec![2.0, 1.0]);
        let psi = ProxTerm::sqnorm(1.0).unwrap();
        let h = ProxTerm::l1(1.0).unwrap();
        let l = LinOp::Dense(ndarray::arr2(&[[1.0, 1.0]]));
        let prob = PdProblem {
            f: &f,
            psi: &psi,
            h: &h,
            l: &l,
        };
        let x0 = c.clone();
        let t = condat_vu_run(&prob, 0.5, 0.9, 500, CvForm::I, &x0, None).unwrap();
        // min ½‖x‖² + |x1 + x2| has x* = 0
        assert!(linalg::norm(t.final_x.as_ref().unwrap()) <= 1e-9);
    }

    #[test]
    fn variance_reduced_pddy_converges() {
        let s = RngStream::new(12);
        let ds = generators::synthetic_classification(40, 5, false, &s);
        let f = make_logistic(&ds, 0.1).unwrap();
        let psi = ProxTerm::l1(0.01).unwrap();
        let h = ProxTerm::l1(0.02).unwrap();
        let l = LinOp::Difference(5);
        let prob = PdProblem {
            f: &f,
            psi: &psi,
            h: &h,
            l: &l,
        };
        let (xs, _) = reference_solution(&f, &ProxTerm::fused_lasso(0.01, 0.02).unwrap(), 1e-13).unwrap();
        let gamma = 1.0 / (3.0 * f.max_smoothness());
        let tau = 0.9 / (gamma * 4.0);
        let t = pddy_run(
            &prob,
            &opts(gamma, tau, EstimatorKind::Saga, 20_000),
            &Array1::zeros(5),
            &s,
            None,
        )
        .unwrap();
        assert!(linalg::dist_sq(t.final_x.as_ref().unwrap(), &xs) <= 1e-8);
    }
}
