//! Random Reshuffling and friends: RR, Shuffle-Once, Incremental Gradient,
//! ProxRR, shuffling-variance diagnostics and importance resampling.

use itertools::Itertools;
use ndarray::Array1;
use rand::seq::SliceRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{OptError, Result};
use crate::harness::trace::{MetricTrace, Recorder, Reference};
use crate::linalg;
use crate::problems::FiniteSumObjective;
use crate::prox::ProxTerm;
use crate::rng::{Rng, RngStream};

/// Largest `n!` for which permutation averages are enumerated exactly.
pub const ENUMERATION_LIMIT: usize = 720;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OrderingKind {
    /// fresh permutation every epoch
    Rr,
    /// one random permutation reused
    So,
    /// one deterministic permutation reused
    Ig,
}

/// Emits one ordering of `0..n` per epoch.
#[derive(Clone, Debug)]
pub struct PermutationSchedule {
    kind: OrderingKind,
    base: Vec<usize>,
    rng: Rng,
}

impl PermutationSchedule {
    pub fn new(kind: OrderingKind, n: usize, stream: &RngStream) -> Self {
        let mut rng = stream.rng();
        let mut base: Vec<usize> = (0..n).collect();
        if kind == OrderingKind::So {
            base.shuffle(&mut rng);
        }
        PermutationSchedule { kind, base, rng }
    }

    /// Incremental gradient over a caller-chosen fixed ordering.
    pub fn incremental(order: Vec<usize>) -> Result<Self> {
        if !is_permutation(&order) {
            return Err(OptError::InvalidParameter("ordering is not a permutation".into()));
        }
        Ok(PermutationSchedule {
            kind: OrderingKind::Ig,
            base: order,
            rng: RngStream::new(0).rng(),
        })
    }

    pub fn kind(&self) -> OrderingKind {
        self.kind
    }

    pub fn next_ordering(&mut self) -> Vec<usize> {
        match self.kind {
            OrderingKind::Rr => {
                let mut p: Vec<usize> = (0..self.base.len()).collect();
                p.shuffle(&mut self.rng);
                p
            }
            OrderingKind::So | OrderingKind::Ig => self.base.clone(),
        }
    }
}

pub fn is_permutation(p: &[usize]) -> bool {
    let mut seen = vec![false; p.len()];
    p.iter().all(|&i| i < p.len() && !std::mem::replace(&mut seen[i], true))
}

/// Per-epoch stepsizes; `k` is the 0-based epoch index.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum StepsizeSchedule {
    Constant {
        gamma: f64,
    },
    /// `min{γ, c / max{1, k - k0}}`
    InvEpoch {
        gamma: f64,
        k0: usize,
        c: f64,
    },
    /// Constant `1/L_max` for the first half of `T` epochs, then
    /// `7 / (μ n (s + k - k0))` with `s = 7 L_max / (4 μ n)`.
    ProxDecreasing {
        t: usize,
        l_max: f64,
        mu: f64,
        n: usize,
    },
    /// `c / (μ k + θ)`
    Harmonic {
        c: f64,
        mu: f64,
        theta: f64,
    },
}

impl StepsizeSchedule {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(OptError::InvalidParameter(m));
        match *self {
            StepsizeSchedule::Constant { gamma } if !(gamma > 0.0) => bad(format!("gamma = {gamma}")),
            StepsizeSchedule::InvEpoch { gamma, c, .. } if !(gamma > 0.0 && c > 0.0) => {
                bad(format!("gamma = {gamma}, c = {c}"))
            }
            StepsizeSchedule::ProxDecreasing { t, l_max, mu, n }
                if t == 0 || n == 0 || !(l_max > 0.0) || !(mu > 0.0) =>
            {
                bad(format!("T = {t}, L_max = {l_max}, mu = {mu}, n = {n}"))
            }
            StepsizeSchedule::Harmonic { c, mu, theta } if !(c > 0.0 && mu >= 0.0 && theta > 0.0) => {
                bad(format!("c = {c}, mu = {mu}, theta = {theta}"))
            }
            _ => Ok(()),
        }
    }

    pub fn gamma(&self, k: usize) -> f64 {
        match *self {
            StepsizeSchedule::Constant { gamma } => gamma,
            StepsizeSchedule::InvEpoch { gamma, k0, c } => {
                let den = k.saturating_sub(k0).max(1) as f64;
                gamma.min(c / den)
            }
            StepsizeSchedule::ProxDecreasing { t, l_max, mu, n } => {
                let k0 = t.div_ceil(2);
                let nf = n as f64;
                if (t as f64) <= l_max / (2.0 * mu * nf) || k <= k0 {
                    1.0 / l_max
                } else {
                    let s = 7.0 * l_max / (4.0 * mu * nf);
                    7.0 / (mu * nf * (s + (k - k0) as f64))
                }
            }
            StepsizeSchedule::Harmonic { c, mu, theta } => c / (mu * k as f64 + theta),
        }
    }
}

/// `n` sequential component steps `x <- x - γ ∇f_{π_i}(x)`.
pub fn epoch_pass(f: &FiniteSumObjective, x: &Array1<f64>, gamma: f64, ordering: &[usize]) -> Array1<f64> {
    let mut x = x.clone();
    for &i in ordering {
        let g = f.sample_grad(i, &x);
        x.scaled_add(-gamma, &g);
    }
    x
}

/// Like [`epoch_pass`] but also returns `x_0, ..., x_n`.
pub fn epoch_pass_iterates(
    f: &FiniteSumObjective,
    x: &Array1<f64>,
    gamma: f64,
    ordering: &[usize],
) -> Vec<Array1<f64>> {
    let mut out = Vec::with_capacity(ordering.len() + 1);
    out.push(x.clone());
    for &i in ordering {
        let mut y = out.last().unwrap().clone();
        let g = f.sample_grad(i, &y);
        y.scaled_add(-gamma, &g);
        out.push(y);
    }
    out
}

fn composite<'a>(f: &'a FiniteSumObjective, psi: &'a ProxTerm) -> impl Fn(&Array1<f64>) -> f64 + 'a {
    move |x| f.value(x) + psi.value(x)
}

/// RR / SO / IG for `epochs` epochs. Row `k` holds the iterate after `k` epochs.
pub fn run_shuffled(
    f: &FiniteSumObjective,
    schedule: &mut PermutationSchedule,
    steps: &StepsizeSchedule,
    epochs: usize,
    x0: &Array1<f64>,
    reference: Option<&Reference>,
) -> MetricTrace {
    let zero = ProxTerm::zero();
    run_prox_rr_inner(f, &zero, schedule, steps, epochs, x0, reference, false)
}

/// ProxRR: an epoch of component steps followed by one `prox_{γ n ψ}`.
pub fn run_prox_rr(
    f: &FiniteSumObjective,
    psi: &ProxTerm,
    schedule: &mut PermutationSchedule,
    steps: &StepsizeSchedule,
    epochs: usize,
    x0: &Array1<f64>,
    reference: Option<&Reference>,
) -> MetricTrace {
    run_prox_rr_inner(f, psi, schedule, steps, epochs, x0, reference, true)
}

#[allow(clippy::too_many_arguments)]
fn run_prox_rr_inner(
    f: &FiniteSumObjective,
    psi: &ProxTerm,
    schedule: &mut PermutationSchedule,
    steps: &StepsizeSchedule,
    epochs: usize,
    x0: &Array1<f64>,
    reference: Option<&Reference>,
    apply_prox: bool,
) -> MetricTrace {
    let n = f.n();
    let mut rec = Recorder::new(composite(f, psi), reference);
    let mut x = x0.clone();
    rec.record(0, &x);
    for k in 0..epochs {
        let gamma = steps.gamma(k);
        let ord = schedule.next_ordering();
        x = epoch_pass(f, &x, gamma, &ord);
        rec.counters.grads += n as u64;
        if apply_prox && !psi.is_zero() {
            x = psi.prox(gamma * n as f64, &x);
        }
        if apply_prox {
            rec.counters.proxes += 1;
        }
        rec.record(k as u64 + 1, &x);
    }
    rec.finish(x)
}

/// Baseline that applies `prox_{γψ}` after every component step.
pub fn run_prox_per_iteration(
    f: &FiniteSumObjective,
    psi: &ProxTerm,
    schedule: &mut PermutationSchedule,
    steps: &StepsizeSchedule,
    epochs: usize,
    x0: &Array1<f64>,
    reference: Option<&Reference>,
) -> MetricTrace {
    let mut rec = Recorder::new(composite(f, psi), reference);
    let mut x = x0.clone();
    rec.record(0, &x);
    for k in 0..epochs {
        let gamma = steps.gamma(k);
        for i in schedule.next_ordering() {
            let g = f.sample_grad(i, &x);
            x.scaled_add(-gamma, &g);
            x = psi.prox(gamma, &x);
            rec.counters.grads += 1;
            rec.counters.proxes += 1;
        }
        rec.record(k as u64 + 1, &x);
    }
    rec.finish(x)
}

/// Proximal SGD with indices drawn uniformly with replacement, `n` steps per
/// recorded epoch.
pub fn run_sgd(
    f: &FiniteSumObjective,
    psi: &ProxTerm,
    steps: &StepsizeSchedule,
    epochs: usize,
    x0: &Array1<f64>,
    stream: &RngStream,
    reference: Option<&Reference>,
) -> MetricTrace {
    let n = f.n();
    let mut rng = stream.rng();
    let mut rec = Recorder::new(composite(f, psi), reference);
    let mut x = x0.clone();
    rec.record(0, &x);
    for k in 0..epochs {
        let gamma = steps.gamma(k);
        for _ in 0..n {
            let i = rng.random_range(0..n);
            let g = f.sample_grad(i, &x);
            x.scaled_add(-gamma, &g);
            rec.counters.grads += 1;
            if !psi.is_zero() {
                x = psi.prox(gamma, &x);
                rec.counters.proxes += 1;
            }
        }
        rec.record(k as u64 + 1, &x);
    }
    rec.finish(x)
}

/// `x*_i = x* - γ Σ_{j<i} ∇f_{π_j}(x*)` for `i = 0..=n`.
pub fn limit_points(f: &FiniteSumObjective, x_star: &Array1<f64>, gamma: f64, ordering: &[usize]) -> Vec<Array1<f64>> {
    let mut out = Vec::with_capacity(ordering.len() + 1);
    let mut p = x_star.clone();
    out.push(p.clone());
    for &i in ordering {
        p.scaled_add(-gamma, &f.sample_grad(i, x_star));
        out.push(p.clone());
    }
    out
}

/// Per-position sums of `D_{f_{π_i}}(x*_i, x*)` over the given orderings.
fn bregman_profile<I>(f: &FiniteSumObjective, x_star: &Array1<f64>, gamma: f64, perms: I) -> (Vec<f64>, usize)
where
    I: Iterator<Item = Vec<usize>>,
{
    let n = f.n();
    let mut acc = vec![0.0; n];
    let mut count = 0;
    for p in perms {
        let pts = limit_points(f, x_star, gamma, &p);
        for i in 0..n {
            acc[i] += f.scale() * f.bregman_i(p[i], &pts[i], x_star);
        }
        count += 1;
    }
    (acc, count)
}

fn factorial_capped(n: usize) -> usize {
    (1..=n)
        .try_fold(1usize, |a, k| a.checked_mul(k).filter(|&v| v <= ENUMERATION_LIMIT))
        .unwrap_or(usize::MAX)
}

fn permutation_source<'a>(n: usize, num_perms: usize, rng: &'a mut Rng) -> Box<dyn Iterator<Item = Vec<usize>> + 'a> {
    let nf = factorial_capped(n);
    if nf <= ENUMERATION_LIMIT && num_perms >= nf {
        Box::new((0..n).permutations(n))
    } else {
        Box::new((0..num_perms).map(move |_| {
            let mut p: Vec<usize> = (0..n).collect();
            p.shuffle(rng);
            p
        }))
    }
}

/// Shuffling variance `max_{1<=i<n} (1/γ) E_π D_{f_{π_i}}(x*_i, x*)`.
///
/// When `n! <= 720` and `num_perms >= n!` the expectation is computed by
/// enumerating every permutation; otherwise `num_perms` samples are drawn.
pub fn shuffling_variance(
    f: &FiniteSumObjective,
    x_star: &Array1<f64>,
    gamma: f64,
    num_perms: usize,
    stream: &RngStream,
) -> f64 {
    assert!(num_perms >= 1, "need at least one permutation");
    let mut rng = stream.rng();
    let (acc, c) = bregman_profile(f, x_star, gamma, permutation_source(f.n(), num_perms, &mut rng));
    acc[1..].iter().fold(0.0, |m, &v| m.max(v / c as f64 / gamma))
}

/// Shuffling radius `max_{0<=i<n} (1/γ²) E_π D_{f_{π_i}}(x*_i, x*)`, with
/// `x*` the minimizer of the regularized problem.
pub fn shuffling_radius(
    f: &FiniteSumObjective,
    x_star: &Array1<f64>,
    gamma: f64,
    num_perms: usize,
    stream: &RngStream,
) -> f64 {
    assert!(num_perms >= 1, "need at least one permutation");
    let mut rng = stream.rng();
    let (acc, c) = bregman_profile(f, x_star, gamma, permutation_source(f.n(), num_perms, &mut rng));
    acc.iter().fold(0.0, |m, &v| m.max(v / c as f64 / (gamma * gamma)))
}

/// Mean `X̄` and `E|X̄_π - X̄|^2` for a size-`m` sample without replacement:
/// `(n-m) / (m (n-1)) σ²` with `σ²` the population variance.
pub fn wor_stats(xs: &[Array1<f64>], m: usize) -> Result<(Array1<f64>, f64)> {
    let n = xs.len();
    if m == 0 || m > n {
        return Err(OptError::InvalidParameter(format!(
            "need 1 <= m <= n, got m={m}, n={n}"
        )));
    }
    let mean = mean_of(xs);
    if n == 1 {
        return Ok((mean, 0.0));
    }
    let sigma2 = xs.iter().map(|x| linalg::dist_sq(x, &mean)).sum::<f64>() / n as f64;
    let v = (n - m) as f64 / (m as f64 * (n - 1) as f64) * sigma2;
    Ok((mean, v))
}

/// The same variance by averaging over all `C(n, m)` subsets.
pub fn wor_variance_enumerated(xs: &[Array1<f64>], m: usize) -> f64 {
    let mean = mean_of(xs);
    let mut acc = 0.0;
    let mut count = 0usize;
    for c in (0..xs.len()).combinations(m) {
        let s: Vec<Array1<f64>> = c.iter().map(|&i| xs[i].clone()).collect();
        acc += linalg::dist_sq(&mean_of(&s), &mean);
        count += 1;
    }
    acc / count as f64
}

fn mean_of(xs: &[Array1<f64>]) -> Array1<f64> {
    let mut m = Array1::zeros(xs[0].len());
    for x in xs {
        m += x;
    }
    m / xs.len() as f64
}

/// Copies `f_i / n_i` of every component, `n_i = ceil(L_i / L̄)`. The result
/// has `N <= 2n` components, each at most `L̄`-smooth, and the same value.
pub fn importance_resample(f: &FiniteSumObjective) -> FiniteSumObjective {
    let n = f.n();
    let lbar = f.mean_smoothness();
    let mut map = Vec::new();
    for (i, &(j, w)) in f.map().iter().enumerate() {
        let ni = if lbar > 0.0 {
            ((f.smoothness_i(i) / lbar) * (1.0 - 1e-12)).ceil().max(1.0) as usize
        } else {
            1
        };
        for _ in 0..ni {
            map.push((j, w / ni as f64));
        }
    }
    let scale = f.scale() * map.len() as f64 / n as f64;
    f.reweighted(map, scale)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::{
        gaussian_vector, make_linear_sum, make_logistic, make_quadratic_sum, reference_solution,
        synthetic_classification,
    };
    use ndarray::array;
    use proptest::prelude::*;

    fn quad_1d(centers: &[f64]) -> FiniteSumObjective {
        make_quadratic_sum(
            centers.iter().map(|_| array![[1.0]]).collect(),
            centers.iter().map(|&c| array![c]).collect(),
        )
        .unwrap()
    }

    #[test]
    fn two_step_hand_unrolled() {
        let f = quad_1d(&[1.0, 3.0]);
        let x = epoch_pass(&f, &array![0.0], 0.1, &[0, 1]);
        let x1 = 0.0 - 0.1 * (0.0 - 1.0);
        let x2 = x1 - 0.1 * (x1 - 3.0);
        assert!((x[0] - x2).abs() <= 1e-15);
    }

    #[test]
    fn single_component_is_gradient_step() {
        let f = quad_1d(&[2.0]);
        let x = epoch_pass(&f, &array![0.0], 0.5, &[0]);
        assert_eq!(x, array![0.0 - 0.5 * (0.0 - 2.0)]);
    }

    #[test]
    fn stationary_components_leave_x() {
        let f = quad_1d(&[1.0, 1.0, 1.0]);
        assert_eq!(epoch_pass(&f, &array![1.0], 0.3, &[2, 0, 1]), array![1.0]);
    }

    #[test]
    fn so_is_deterministic_and_fixed() {
        let mut a = PermutationSchedule::new(OrderingKind::So, 7, &RngStream::new(5));
        let mut b = PermutationSchedule::new(OrderingKind::So, 7, &RngStream::new(5));
        let p = a.next_ordering();
        assert_eq!(p, a.next_ordering());
        assert_eq!(p, b.next_ordering());
        assert!(is_permutation(&p));
    }

    #[test]
    fn rr_and_so_agree_for_one_component() {
        let f = quad_1d(&[4.0]);
        let st = StepsizeSchedule::Constant { gamma: 0.2 };
        let s = RngStream::new(1);
        let a = run_shuffled(
            &f,
            &mut PermutationSchedule::new(OrderingKind::Rr, 1, &s),
            &st,
            5,
            &array![0.0],
            None,
        );
        let b = run_shuffled(
            &f,
            &mut PermutationSchedule::new(OrderingKind::So, 1, &s),
            &st,
            5,
            &array![0.0],
            None,
        );
        assert!(a.same_metrics(&b));
        assert_eq!(a.final_x, b.final_x);
    }

    #[test]
    fn prox_rr_with_zero_matches_rr() {
        let ds = synthetic_classification(20, 3, false, &RngStream::new(2));
        let f = make_logistic(&ds, 0.1).unwrap();
        let st = StepsizeSchedule::Constant { gamma: 0.1 };
        let s = RngStream::new(9);
        let x0 = Array1::zeros(3);
        let a = run_shuffled(
            &f,
            &mut PermutationSchedule::new(OrderingKind::Rr, 20, &s),
            &st,
            4,
            &x0,
            None,
        );
        let b = run_prox_rr(
            &f,
            &ProxTerm::zero(),
            &mut PermutationSchedule::new(OrderingKind::Rr, 20, &s),
            &st,
            4,
            &x0,
            None,
        );
        assert_eq!(a.final_x, b.final_x);
        assert_eq!(b.last().unwrap().proxes, 4);
        assert_eq!(b.last().unwrap().grads, 80);
    }

    #[test]
    fn end_of_epoch_prox_example() {
        let f = make_linear_sum(vec![array![1.0, -2.0], array![0.5, 3.0]]).unwrap();
        let psi = ProxTerm::sqnorm(1.0).unwrap();
        let gamma = 0.3;
        let x0 = array![1.0, 1.0];
        let st = StepsizeSchedule::Constant { gamma };
        let mut ig = PermutationSchedule::incremental(vec![0, 1]).unwrap();
        let t = run_prox_rr(&f, &psi, &mut ig, &st, 1, &x0, None);
        let mut u = x0.clone();
        u.scaled_add(-2.0 * gamma, &f.grad(&x0));
        let want = psi.prox(2.0 * gamma, &u);
        let got = t.final_x.unwrap();
        assert!(linalg::norm(&(&got - &want)) <= 1e-14);
        let mut ig = PermutationSchedule::incremental(vec![0, 1]).unwrap();
        let per = run_prox_per_iteration(&f, &psi, &mut ig, &st, 1, &x0, None)
            .final_x
            .unwrap();
        assert!(linalg::norm(&(&per - &want)) > 1e-6);
    }

    #[test]
    fn limit_point_examples() {
        let f = quad_1d(&[-1.0, 1.0]);
        let xs = array![0.0];
        let pts = limit_points(&f, &xs, 0.5, &[0, 1]);
        assert_eq!(pts[1], array![-0.5]);
        let telescoped = &xs - &(f.grad(&xs) * (0.5 * 2.0));
        assert!(linalg::norm(&(&pts[2] - &telescoped)) < 1e-15);
    }

    #[test]
    fn shuffling_variance_zero_when_identical() {
        let f = quad_1d(&[2.0, 2.0, 2.0]);
        assert_eq!(shuffling_variance(&f, &array![2.0], 0.1, 6, &RngStream::new(0)), 0.0);
    }

    #[test]
    fn enumeration_matches_many_samples() {
        let f = quad_1d(&[-1.0, 0.5, 2.0, 3.0]);
        let (xs, _) = reference_solution(&f, &ProxTerm::zero(), 1e-14).unwrap();
        let exact = shuffling_variance(&f, &xs, 0.1, 24, &RngStream::new(0));
        let mc = shuffling_variance(&f, &xs, 0.1, 23, &RngStream::new(0));
        assert!(exact > 0.0);
        assert!((exact - mc).abs() < 0.5 * exact);
    }

    #[test]
    fn wor_examples() {
        let xs = vec![array![1.0], array![-1.0]];
        assert_eq!(wor_stats(&xs, 1).unwrap().1, 1.0);
        assert_eq!(wor_stats(&xs, 2).unwrap().1, 0.0);
        assert_eq!(wor_stats(&xs[..1], 1).unwrap().1, 0.0);
        assert!(wor_stats(&xs, 3).is_err());
    }

    #[test]
    fn wor_matches_monte_carlo() {
        let s = RngStream::new(4);
        let xs: Vec<Array1<f64>> = (0..6).map(|i| gaussian_vector(3, &s.child(&i.to_string()))).collect();
        let (mean, v) = wor_stats(&xs, 2).unwrap();
        let mut rng = s.child("mc").rng();
        let draws = 100_000;
        let samples: Vec<f64> = (0..draws)
            .map(|_| {
                let mut p: Vec<usize> = (0..6).collect();
                p.shuffle(&mut rng);
                let m = (&xs[p[0]] + &xs[p[1]]) / 2.0;
                linalg::dist_sq(&m, &mean)
            })
            .collect();
        let mu = samples.iter().sum::<f64>() / draws as f64;
        let sd = (samples.iter().map(|x| (x - mu).powi(2)).sum::<f64>() / (draws - 1) as f64).sqrt();
        assert!((mu - v).abs() <= 3.0 * sd / (draws as f64).sqrt());
    }

    #[test]
    fn resample_examples() {
        let f = make_quadratic_sum(vec![array![[1.0]], array![[3.0]]], vec![array![0.0], array![1.0]]).unwrap();
        let g = importance_resample(&f);
        assert_eq!(g.n(), 3);
        let x = array![0.7];
        assert!((g.value(&x) - f.value(&x)).abs() <= 1e-12);
        assert!((0..3).all(|i| g.smoothness_i(i) <= 2.0 * (1.0 + 1e-12)));
        let same = quad_1d(&[0.1, 0.2, 0.3]);
        assert_eq!(importance_resample(&same).n(), 3);
    }

    #[test]
    fn prox_decreasing_two_phases() {
        let s = StepsizeSchedule::ProxDecreasing {
            t: 100,
            l_max: 2.0,
            mu: 0.1,
            n: 10,
        };
        assert_eq!(s.gamma(0), 0.5);
        assert_eq!(s.gamma(50), 0.5);
        let sv = 7.0 * 2.0 / (4.0 * 0.1 * 10.0);
        assert_eq!(s.gamma(51), 7.0 / (0.1 * 10.0 * (sv + 1.0)));
        let short = StepsizeSchedule::ProxDecreasing {
            t: 1,
            l_max: 2.0,
            mu: 0.1,
            n: 10,
        };
        assert_eq!(short.gamma(5), 0.5);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn epoch_pass_is_permutation_equivariant(seed in 0u64..1000) {
            let s = RngStream::new(seed);
            let c: Vec<f64> = gaussian_vector(5, &s.child("c")).to_vec();
            let f = quad_1d(&c);
            let mut relabel: Vec<usize> = (0..5).collect();
            relabel.shuffle(&mut s.child("p").rng());
            let g = quad_1d(&relabel.iter().map(|&i| c[i]).collect::<Vec<_>>());
            // component k of g is component relabel[k] of f
            let order_g: Vec<usize> = (0..5).rev().collect();
            let order_f: Vec<usize> = order_g.iter().map(|&k| relabel[k]).collect();
            let a = epoch_pass(&f, &array![0.3], 0.1, &order_f);
            let b = epoch_pass(&g, &array![0.3], 0.1, &order_g);
            prop_assert_eq!(a, b);
        }

        #[test]
        fn orderings_are_permutations(seed in 0u64..1000, n in 1usize..30) {
            let mut s = PermutationSchedule::new(OrderingKind::Rr, n, &RngStream::new(seed));
            for _ in 0..3 {
                prop_assert!(is_permutation(&s.next_ordering()));
            }
        }

        #[test]
        fn resample_bounds(ls in proptest::collection::vec(0.01f64..100.0, 1..30)) {
            let hs: Vec<_> = ls.iter().map(|&l| array![[l]]).collect();
            let cs: Vec<_> = ls.iter().map(|_| array![0.5]).collect();
            let f = make_quadratic_sum(hs, cs).unwrap();
            let g = importance_resample(&f);
            prop_assert!(g.n() <= 2 * f.n());
            let lbar = f.mean_smoothness();
            prop_assert!(g.smoothness_all().iter().all(|&l| l <= lbar * (1.0 + 1e-12)));
            let x = array![1.7];
            prop_assert!((g.value(&x) - f.value(&x)).abs() <= 1e-12 * (1.0 + f.value(&x).abs()));
        }
    }
}
