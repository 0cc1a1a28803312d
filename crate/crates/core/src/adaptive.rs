//! Adaptive stepsizes from local curvature: AdGD and its variants,
//! AdGD-accel, AdSGD, and the ergodic averaging certificate.

use ndarray::Array1;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{OptError, Result};
use crate::harness::trace::{MetricTrace, Recorder, Reference};
use crate::linalg;
use crate::problems::{FiniteSumObjective, Smooth};
use crate::rng::{Rng, RngStream};

pub const DEFAULT_GAMMA0: f64 = 1e-10;

/// `a / b` with `1/0 = +∞`.
fn ratio(a: f64, b: f64) -> f64 {
    if b == 0.0 {
        f64::INFINITY
    } else {
        a / b
    }
}

/// Largest stepsize kept; leaves room for the ergodic weights
/// `γ(1 + θ)` (with `θ` below the golden ratio) to stay finite.
const GAMMA_CAP: f64 = f64::MAX / 8.0;

/// `min{a, b}` with a fallback when both are infinite, capped at [`GAMMA_CAP`].
fn min_or(a: f64, b: f64, fallback: f64) -> f64 {
    let m = a.min(b);
    if m.is_infinite() {
        fallback
    } else {
        m.min(GAMMA_CAP)
    }
}

/// `sqrt(c + t) * g` treating `∞ * 0` as `+∞` (the bound is inactive).
fn growth(c: f64, theta: f64, g: f64) -> f64 {
    if theta.is_infinite() {
        f64::INFINITY
    } else {
        (c + theta).sqrt() * g
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AdgdRule {
    /// `min{√(1+θ)γ, |Δx|/(2|Δg|)}`
    Standard,
    /// `min{√(1/β+θ)γ, α|Δx|/|Δg|}`, `β = 1/(2(1-α))`
    General { alpha: f64 },
    /// `min{√(1+θ)γ, 1/(γL²) + 1/(2L_k)}` with `γ_0 = 1/L`
    KnownL { l: f64 },
}

/// Weighted ergodic average
/// `x̂_K = [γ_K(1+θ_K) x_K + Σ_{i<K} w_i x_i] / S_K`,
/// `w_i = γ_i(1+θ_i) - γ_{i+1}θ_{i+1}`, `S_K = Σ γ_i + γ_1 θ_1`.
#[derive(Clone, Debug, Default)]
pub struct ErgodicAverage {
    acc: Option<Array1<f64>>,
    last: Option<(Array1<f64>, f64, f64)>,
    sum_gamma: f64,
    first: f64,
    pub weights: Vec<f64>,
}

impl ErgodicAverage {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds `(x_i, γ_i, θ_i)` for the next `i = 1, 2, ...`.
    pub fn push(&mut self, x: &Array1<f64>, gamma: f64, theta: f64) {
        match self.last.take() {
            None => {
                self.first = gamma * theta;
                self.acc = Some(Array1::zeros(x.len()));
            }
            Some((xp, gp, tp)) => {
                let w = gp * (1.0 + tp) - gamma * theta;
                debug_assert!(w >= -1e-12 * (gp * (1.0 + tp)).max(1.0), "negative ergodic weight {w}");
                self.acc.as_mut().unwrap().scaled_add(w, &xp);
                self.weights.push(w);
            }
        }
        self.sum_gamma += gamma;
        self.last = Some((x.clone(), gamma, theta));
    }

    pub fn len(&self) -> usize {
        self.weights.len() + usize::from(self.last.is_some())
    }

    pub fn is_empty(&self) -> bool {
        self.last.is_none()
    }

    pub fn total_weight(&self) -> f64 {
        self.sum_gamma + self.first
    }

    pub fn average(&self) -> Option<Array1<f64>> {
        let (x, g, t) = self.last.as_ref()?;
        let mut s = self.acc.as_ref()?.clone();
        s.scaled_add(g * (1.0 + t), x);
        let total = self.total_weight();
        Some(if total.is_finite() { s / total } else { x.clone() })
    }
}

/// Batch form of [`ErgodicAverage`] over `(x_i, γ_i, θ_i)`, `i = 1..=K`.
pub fn ergodic_average(points: &[(Array1<f64>, f64, f64)]) -> Result<Array1<f64>> {
    if points.is_empty() {
        return Err(OptError::InvalidParameter("ergodic average of nothing".into()));
    }
    let mut e = ErgodicAverage::new();
    for (x, g, t) in points {
        e.push(x, *g, *t);
    }
    Ok(e.average().unwrap())
}

/// State of AdGD and its general and known-`L` variants.
#[derive(Clone, Debug)]
pub struct Adgd {
    rule: AdgdRule,
    x: Array1<f64>,
    x_prev: Option<Array1<f64>>,
    g_prev: Option<Array1<f64>>,
    gamma: f64,
    theta: f64,
    k: usize,
    pub ergodic: ErgodicAverage,
    pub gammas: Vec<f64>,
    pub grads: u64,
}

impl Adgd {
    pub fn new(rule: AdgdRule, x0: Array1<f64>, gamma0: f64) -> Result<Self> {
        let gamma0 = match rule {
            AdgdRule::KnownL { l } if l > 0.0 => 1.0 / l,
            AdgdRule::KnownL { l } => return Err(OptError::InvalidParameter(format!("L = {l}"))),
            AdgdRule::General { alpha } if !(alpha > 0.0 && alpha < 1.0) => {
                return Err(OptError::InvalidParameter(format!("alpha = {alpha} not in (0, 1)")))
            }
            _ => gamma0,
        };
        if !(gamma0 > 0.0) {
            return Err(OptError::InvalidParameter(format!("gamma0 = {gamma0}")));
        }
        Ok(Adgd {
            rule,
            x: x0,
            x_prev: None,
            g_prev: None,
            gamma: gamma0,
            theta: f64::INFINITY,
            k: 0,
            ergodic: ErgodicAverage::new(),
            gammas: vec![gamma0],
            grads: 0,
        })
    }

    pub fn x(&self) -> &Array1<f64> {
        &self.x
    }

    /// Last stepsize used.
    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    pub fn iteration(&self) -> usize {
        self.k
    }

    /// One step from `x^k` to `x^{k+1}`.
    pub fn step<S: Smooth + ?Sized>(&mut self, f: &S) -> &Array1<f64> {
        let g = f.grad(&self.x);
        self.grads += 1;
        if self.k == 0 {
            let mut next = self.x.clone();
            next.scaled_add(-self.gamma, &g);
            self.x_prev = Some(std::mem::replace(&mut self.x, next));
            self.g_prev = Some(g);
            self.k = 1;
            return &self.x;
        }
        let dx = linalg::norm(&(&self.x - self.x_prev.as_ref().unwrap()));
        let dg = linalg::norm(&(&g - self.g_prev.as_ref().unwrap()));
        let gamma = match self.rule {
            AdgdRule::Standard => min_or(growth(1.0, self.theta, self.gamma), ratio(0.5 * dx, dg), self.gamma),
            AdgdRule::General { alpha } => {
                let beta = 1.0 / (2.0 * (1.0 - alpha));
                min_or(
                    growth(1.0 / beta, self.theta, self.gamma),
                    ratio(alpha * dx, dg),
                    self.gamma,
                )
            }
            AdgdRule::KnownL { l } => {
                let lk = ratio(dg, dx);
                let second = 1.0 / (self.gamma * l * l) + ratio(1.0, 2.0 * lk);
                min_or(growth(1.0, self.theta, self.gamma), second, self.gamma)
            }
        };
        self.theta = gamma / self.gamma;
        self.gamma = gamma;
        self.gammas.push(gamma);
        self.ergodic.push(&self.x, gamma, self.theta);
        let mut next = self.x.clone();
        next.scaled_add(-gamma, &g);
        self.x_prev = Some(std::mem::replace(&mut self.x, next));
        self.g_prev = Some(g);
        self.k += 1;
        &self.x
    }
}

/// AdGD-accel with `μ_0 = 0` and `Θ_0 = +∞`.
#[derive(Clone, Debug)]
pub struct AdgdAccel {
    x: Array1<f64>,
    y: Array1<f64>,
    x_prev: Option<Array1<f64>>,
    g_prev: Option<Array1<f64>>,
    gamma: f64,
    theta: f64,
    mu: f64,
    big_theta: f64,
    k: usize,
    pub betas: Vec<f64>,
    pub mus: Vec<f64>,
    pub gammas: Vec<f64>,
}

impl AdgdAccel {
    pub fn new(x0: Array1<f64>, gamma0: f64) -> Result<Self> {
        if !(gamma0 > 0.0) {
            return Err(OptError::InvalidParameter(format!("gamma0 = {gamma0}")));
        }
        Ok(AdgdAccel {
            y: x0.clone(),
            x: x0,
            x_prev: None,
            g_prev: None,
            gamma: gamma0,
            theta: f64::INFINITY,
            mu: 0.0,
            big_theta: f64::INFINITY,
            k: 0,
            betas: Vec::new(),
            mus: Vec::new(),
            gammas: vec![gamma0],
        })
    }

    pub fn x(&self) -> &Array1<f64> {
        &self.x
    }

    pub fn step<S: Smooth + ?Sized>(&mut self, f: &S) -> &Array1<f64> {
        let g = f.grad(&self.x);
        if self.k == 0 {
            let mut next = self.x.clone();
            next.scaled_add(-self.gamma, &g);
            self.y = next.clone();
            self.x_prev = Some(std::mem::replace(&mut self.x, next));
            self.g_prev = Some(g);
            self.k = 1;
            return &self.x;
        }
        let dx = linalg::norm(&(&self.x - self.x_prev.as_ref().unwrap()));
        let dg = linalg::norm(&(&g - self.g_prev.as_ref().unwrap()));
        let gamma = min_or(
            growth(1.0, self.theta / 2.0, self.gamma),
            ratio(dx, 2.0 * dg),
            self.gamma,
        );
        let mu_growth = if self.mu == 0.0 {
            f64::INFINITY
        } else {
            growth(1.0, self.big_theta / 2.0, self.mu)
        };
        let mu = min_or(mu_growth, ratio(dg, 2.0 * dx), self.mu);
        let (a, b) = ((1.0 / gamma).sqrt(), mu.sqrt());
        let beta = (a - b) / (a + b);
        let mut y_next = self.x.clone();
        y_next.scaled_add(-gamma, &g);
        let x_next = &y_next + &((&y_next - &self.y) * beta);
        self.theta = gamma / self.gamma;
        self.big_theta = ratio(mu, self.mu);
        self.gamma = gamma;
        self.mu = mu;
        self.gammas.push(gamma);
        self.mus.push(mu);
        self.betas.push(beta);
        self.y = y_next;
        self.x_prev = Some(std::mem::replace(&mut self.x, x_next));
        self.g_prev = Some(g);
        self.k += 1;
        &self.x
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AdsgdOption {
    /// curvature from the step's own sample
    Biased,
    /// curvature from an independent sample, evaluated at both points
    Unbiased,
}

/// Adaptive SGD over the components of a finite sum.
#[derive(Clone, Debug)]
pub struct Adsgd {
    alpha: f64,
    option: AdsgdOption,
    batch: usize,
    rng: Rng,
    x: Array1<f64>,
    x_prev: Option<Array1<f64>>,
    gamma: f64,
    theta: f64,
    k: usize,
    pub gammas: Vec<f64>,
    pub grads: u64,
}

impl Adsgd {
    pub fn new(
        alpha: f64,
        option: AdsgdOption,
        batch: usize,
        x0: Array1<f64>,
        gamma0: f64,
        stream: &RngStream,
    ) -> Result<Self> {
        if !(alpha > 0.0) || !(gamma0 > 0.0) || batch == 0 {
            return Err(OptError::InvalidParameter(format!(
                "alpha = {alpha}, gamma0 = {gamma0}, batch = {batch}"
            )));
        }
        Ok(Adsgd {
            alpha,
            option,
            batch,
            rng: stream.rng(),
            x: x0,
            x_prev: None,
            gamma: gamma0,
            theta: f64::INFINITY,
            k: 0,
            gammas: vec![gamma0],
            grads: 0,
        })
    }

    pub fn x(&self) -> &Array1<f64> {
        &self.x
    }

    fn sample(&mut self, n: usize) -> Vec<usize> {
        (0..self.batch).map(|_| self.rng.random_range(0..n)).collect()
    }

    fn batch_grad(&mut self, f: &FiniteSumObjective, idx: &[usize], x: &Array1<f64>) -> Array1<f64> {
        let mut g = f.sample_grad(idx[0], x);
        for &i in &idx[1..] {
            g += &f.sample_grad(i, x);
        }
        self.grads += idx.len() as u64;
        if idx.len() > 1 {
            g /= idx.len() as f64;
        }
        g
    }

    pub fn step(&mut self, f: &FiniteSumObjective) -> &Array1<f64> {
        let xi = self.sample(f.n());
        let x = self.x.clone();
        let g = self.batch_grad(f, &xi, &x);
        if self.k > 0 {
            let xp = self.x_prev.clone().unwrap();
            let dx = linalg::norm(&(&x - &xp));
            let dg = match self.option {
                AdsgdOption::Biased => {
                    let gp = self.batch_grad(f, &xi, &xp);
                    linalg::norm(&(&g - &gp))
                }
                AdsgdOption::Unbiased => {
                    let zeta = self.sample(f.n());
                    let a = self.batch_grad(f, &zeta, &x);
                    let b = self.batch_grad(f, &zeta, &xp);
                    linalg::norm(&(&a - &b))
                }
            };
            let lk = ratio(dg, dx);
            let gamma = min_or(growth(1.0, self.theta, self.gamma), ratio(self.alpha, lk), self.gamma);
            self.theta = gamma / self.gamma;
            self.gamma = gamma;
            self.gammas.push(gamma);
        }
        let mut next = x;
        next.scaled_add(-self.gamma, &g);
        self.x_prev = Some(std::mem::replace(&mut self.x, next));
        self.k += 1;
        &self.x
    }
}

/// Runs AdGD for `steps` steps; rows hold `x^k`, the `aux` series `gamma`
/// the stepsize that produced it, and `ergodic_gap` the objective gap of
/// the ergodic average when a reference is given.
pub fn run_adgd<S: Smooth + ?Sized>(
    f: &S,
    rule: AdgdRule,
    x0: &Array1<f64>,
    gamma0: f64,
    steps: usize,
    reference: Option<&Reference>,
) -> Result<MetricTrace> {
    let mut a = Adgd::new(rule, x0.clone(), gamma0)?;
    let mut rec = Recorder::new(|x| f.value(x), reference);
    rec.record(0, x0);
    for k in 1..=steps {
        a.step(f);
        if a.x().iter().any(|v| !v.is_finite()) {
            return Err(OptError::Numerical(format!("AdGD diverged at step {k}")));
        }
        rec.counters.grads = a.grads;
        rec.record(k as u64, a.x());
        rec.trace.push_aux("gamma", a.gamma());
        if let (Some(r), Some(xh)) = (reference, a.ergodic.average()) {
            rec.trace.push_aux("ergodic_gap", f.value(&xh) - r.f);
        }
    }
    let x = a.x().clone();
    Ok(rec.finish(x))
}

pub fn run_adgd_accel<S: Smooth + ?Sized>(
    f: &S,
    x0: &Array1<f64>,
    gamma0: f64,
    steps: usize,
    reference: Option<&Reference>,
) -> Result<MetricTrace> {
    let mut a = AdgdAccel::new(x0.clone(), gamma0)?;
    let mut rec = Recorder::new(|x| f.value(x), reference);
    rec.record(0, x0);
    for k in 1..=steps {
        a.step(f);
        if a.x().iter().any(|v| !v.is_finite()) {
            return Err(OptError::Numerical(format!("AdGD-accel diverged at step {k}")));
        }
        rec.counters.grads = k as u64;
        rec.record(k as u64, a.x());
    }
    let x = a.x().clone();
    Ok(rec.finish(x))
}

#[allow(clippy::too_many_arguments)]
pub fn run_adsgd(
    f: &FiniteSumObjective,
    alpha: f64,
    option: AdsgdOption,
    batch: usize,
    x0: &Array1<f64>,
    gamma0: f64,
    steps: usize,
    stream: &RngStream,
    reference: Option<&Reference>,
) -> Result<MetricTrace> {
    let mut a = Adsgd::new(alpha, option, batch, x0.clone(), gamma0, stream)?;
    let mut rec = Recorder::new(|x| f.value(x), reference);
    rec.record(0, x0);
    for k in 1..=steps {
        a.step(f);
        if a.x().iter().any(|v| !v.is_finite()) {
            return Err(OptError::Numerical(format!("AdSGD diverged at step {k}")));
        }
        rec.counters.grads = a.grads;
        rec.record(k as u64, a.x());
    }
    let x = a.x().clone();
    Ok(rec.finish(x))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::{make_quadratic_sum, FnSmooth};
    use ndarray::array;

    fn half_square() -> FnSmooth<impl Fn(&Array1<f64>) -> f64, impl Fn(&Array1<f64>) -> Array1<f64>> {
        FnSmooth {
            dim: 1,
            value: |x: &Array1<f64>| 0.5 * x[0] * x[0],
            grad: |x: &Array1<f64>| x.clone(),
        }
    }

    #[test]
    fn quadratic_stepsize_settles_at_half() {
        let f = half_square();
        let mut a = Adgd::new(AdgdRule::Standard, array![1.0], 0.1).unwrap();
        for _ in 0..6 {
            a.step(&f);
        }
        // every curvature bound is 1/2; the growth bound is reached at once
        assert_eq!(&a.gammas[1..], &[0.5; 5]);
    }

    #[test]
    fn first_step_uses_gamma0() {
        let f = half_square();
        let mut a = Adgd::new(AdgdRule::Standard, array![2.0], 1e-10).unwrap();
        a.step(&f);
        assert_eq!(a.x()[0], 2.0 - 1e-10 * 2.0);
        assert!(a.theta().is_infinite());
    }

    #[test]
    fn zero_gradient_keeps_x_and_grows_gamma() {
        let f = FnSmooth {
            dim: 1,
            value: |_: &Array1<f64>| 0.0,
            grad: |_: &Array1<f64>| array![0.0],
        };
        let mut a = Adgd::new(AdgdRule::Standard, array![3.0], 1.0).unwrap();
        for _ in 0..5 {
            a.step(&f);
        }
        assert_eq!(a.x()[0], 3.0);
        assert_eq!(a.gammas[1], 1.0);
        assert!(a.gammas.windows(2).skip(1).all(|w| w[1] > w[0]));
    }

    #[test]
    fn general_half_is_standard() {
        let f = make_quadratic_sum(vec![array![[3.0, 1.0], [1.0, 2.0]]], vec![array![1.0, -1.0]]).unwrap();
        let x0 = array![0.0, 0.0];
        let a = run_adgd(&f, AdgdRule::Standard, &x0, 1e-3, 40, None).unwrap();
        let b = run_adgd(&f, AdgdRule::General { alpha: 0.5 }, &x0, 1e-3, 40, None).unwrap();
        assert_eq!(a.aux["gamma"], b.aux["gamma"]);
        assert_eq!(a.final_x, b.final_x);
    }

    #[test]
    fn general_bound_on_quadratic() {
        let f = half_square();
        let mut a = Adgd::new(AdgdRule::General { alpha: 0.9 }, array![1.0], 0.1).unwrap();
        for _ in 0..6 {
            a.step(&f);
        }
        assert!(a.gammas[1..].iter().all(|&g| g <= 0.9));
        assert!((a.gammas.last().unwrap() - 0.9).abs() < 1e-12);
        assert!(Adgd::new(AdgdRule::General { alpha: 1.0 }, array![1.0], 1.0).is_err());
    }

    #[test]
    fn known_l_variant() {
        let f = half_square();
        let a = Adgd::new(AdgdRule::KnownL { l: 1.0 }, array![1.0], 123.0).unwrap();
        assert_eq!(a.gamma(), 1.0);
        let mut a = Adgd::new(AdgdRule::KnownL { l: 2.0 }, array![1.0], 1.0).unwrap();
        for _ in 0..4 {
            a.step(&f);
        }
        assert!(a.gammas.iter().all(|&g| g > 0.0 && g.is_finite()));
    }

    #[test]
    fn ergodic_examples() {
        let x = array![1.5, -2.0];
        assert_eq!(ergodic_average(&[(x.clone(), 0.3, 7.0)]).unwrap(), x);
        let same: Vec<_> = (0..4).map(|_| (x.clone(), 0.2, 1.0)).collect();
        let avg = ergodic_average(&same).unwrap();
        assert!(linalg::norm(&(&avg - &x)) < 1e-15);
        // constant γ, θ = 1: weights γ, γ, 2γ over S = 4γ
        let pts = vec![
            (array![1.0], 1.0, 1.0),
            (array![2.0], 1.0, 1.0),
            (array![3.0], 1.0, 1.0),
        ];
        assert_eq!(ergodic_average(&pts).unwrap()[0], (1.0 + 2.0 + 2.0 * 3.0) / 4.0);
    }

    #[test]
    fn accel_momentum_range() {
        let f = make_quadratic_sum(vec![array![[4.0, 0.0], [0.0, 1.0]]], vec![array![1.0, 1.0]]).unwrap();
        let mut a = AdgdAccel::new(array![0.0, 0.0], 1e-10).unwrap();
        for _ in 0..20 {
            a.step(&f);
        }
        for (&g, &m) in a.gammas[1..].iter().zip(&a.mus) {
            if m <= 1.0 / (4.0 * g) {
                let b = ((1.0 / g).sqrt() - m.sqrt()) / ((1.0 / g).sqrt() + m.sqrt());
                assert!((1.0 / 3.0..1.0).contains(&b));
            }
        }
        assert!(a.mus.iter().all(|m| m.is_finite()));
    }

    #[test]
    fn adsgd_interpolation_converges() {
        let f = make_quadratic_sum(
            vec![array![[1.0, 0.0], [0.0, 0.2]], array![[0.3, 0.0], [0.0, 1.0]]],
            vec![array![1.0, 2.0]; 2],
        )
        .unwrap();
        let t = run_adsgd(
            &f,
            0.5,
            AdsgdOption::Biased,
            1,
            &array![0.0, 0.0],
            1e-10,
            3000,
            &RngStream::new(0),
            None,
        )
        .unwrap();
        assert!(linalg::dist_sq(&t.final_x.unwrap(), &array![1.0, 2.0]) < 1e-8);
    }

    #[test]
    fn adsgd_stepsizes_within_curvature_range() {
        let f = make_quadratic_sum(
            vec![array![[2.0, 0.0], [0.0, 0.5]], array![[1.0, 0.0], [0.0, 1.5]]],
            vec![array![0.0, 1.0], array![1.0, 0.0]],
        )
        .unwrap();
        let alpha = 0.1;
        for opt in [AdsgdOption::Biased, AdsgdOption::Unbiased] {
            let mut a = Adsgd::new(alpha, opt, 1, array![0.0, 0.0], 1e-10, &RngStream::new(4)).unwrap();
            for _ in 0..200 {
                a.step(&f);
            }
            // after the first adaptive step every γ_k is pinned to [α/L, α/μ]
            for &g in &a.gammas[2..] {
                assert!(g >= alpha / 2.0 - 1e-12 && g <= alpha / 0.5 + 1e-12, "{g}");
            }
        }
    }

    #[test]
    fn adsgd_single_component_options_agree() {
        let f = make_quadratic_sum(vec![array![[2.0]]], vec![array![1.0]]).unwrap();
        let s = RngStream::new(1);
        let a = run_adsgd(&f, 0.5, AdsgdOption::Biased, 1, &array![0.0], 1e-3, 30, &s, None).unwrap();
        let b = run_adsgd(&f, 0.5, AdsgdOption::Unbiased, 1, &array![0.0], 1e-3, 30, &s, None).unwrap();
        assert_eq!(a.final_x, b.final_x);
    }
}
