//! The property suite behind `check invariants`. Every check is
//! deterministic (fixed seeds) and returns a [`CheckResult`] instead of
//! panicking, so callers can print one line per property.

use std::fmt;

use ndarray::{s, Array1, Array2};
use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};

use super::bundled::BUNDLED;
use super::config::{ConstraintSpec, RunConfig};
use super::run::{affine_set, random_constraints, run};
use super::trace::{MetricTrace, Reference};
use crate::adaptive::{run_adgd, Adgd, AdgdRule, DEFAULT_GAMMA0};
use crate::error::Result;
use crate::federated::{fed_rr, local_sgd, minibatch_sgd, partition, LocalSgdOptions, PartitionMode, SyncSchedule};
use crate::linalg;
use crate::problems::{
    fused_difference, fused_spectrum, gaussian_matrix, gaussian_system, gaussian_vector, make_least_squares,
    make_linear_sum, make_logistic, make_quadratic_sum, reference_solution, synthetic_classification,
    FiniteSumObjective, FnSmooth,
};
use crate::prox::{Phi, ProxTerm};
use crate::quantize::{
    alpha_p, diana_condition, diana_default_params, diana_run, expected_nnz, psi, quant_block, BlockSpec, DianaOptions,
    PNorm,
};
use crate::rng::{Rng, RngStream};
use crate::shuffle::{
    importance_resample, run_prox_per_iteration, run_prox_rr, run_sgd, run_shuffled, shuffling_variance, wor_stats,
    wor_variance_enumerated, OrderingKind, PermutationSchedule, StepsizeSchedule,
};
use crate::splitting::{
    condat_vu_run, hyperplanes, importance_probs, kaczmarz_iterates, licosgd_run, pd3o_run, pddy_run,
    sdm_kaczmarz_iterates, sdm_linear_run, spectral_norm, CvForm, EstimatorConstants, EstimatorKind, IndexOrder, LinOp,
    PdOptions, PdProblem, PddyInit, Sdm, SdmLinear, SdmOptions, SdmStepsize,
};

const SEED: u64 = 20_240_601;

#[derive(Clone, Debug)]
pub struct CheckResult {
    pub id: u32,
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

impl fmt::Display for CheckResult {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let tag = if self.passed { "PASS" } else { "FAIL" };
        write!(f, "{tag} [{:>2}] {}: {}", self.id, self.name, self.detail)
    }
}

/// Collects sub-check failures; the first few are kept for the report.
struct Tally {
    failures: Vec<String>,
    checks: usize,
}

impl Tally {
    fn new() -> Self {
        Tally {
            failures: Vec::new(),
            checks: 0,
        }
    }

    fn check(&mut self, ok: bool, what: impl FnOnce() -> String) {
        self.checks += 1;
        if !ok {
            self.failures.push(what());
        }
    }

    fn finish(self, id: u32, name: &'static str, summary: String) -> CheckResult {
        let passed = self.failures.is_empty();
        let detail = if passed {
            format!("{summary} ({} checks)", self.checks)
        } else {
            let shown: Vec<&str> = self.failures.iter().take(3).map(String::as_str).collect();
            format!(
                "{} of {} failed: {}",
                self.failures.len(),
                self.checks,
                shown.join("; ")
            )
        };
        CheckResult {
            id,
            name,
            passed,
            detail,
        }
    }
}

fn errored(id: u32, name: &'static str, e: impl fmt::Display) -> CheckResult {
    CheckResult {
        id,
        name,
        passed: false,
        detail: format!("error: {e}"),
    }
}

fn wrap(id: u32, name: &'static str, body: impl FnOnce() -> Result<CheckResult>) -> CheckResult {
    body().unwrap_or_else(|e| errored(id, name, e))
}

fn normal(rng: &mut Rng) -> f64 {
    StandardNormal.sample(rng)
}

fn normal_vec(d: usize, rng: &mut Rng) -> Array1<f64> {
    Array1::from_shape_fn(d, |_| normal(rng))
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Least-squares line through `(x, y)`; returns `(slope, R²)`.
pub fn linear_fit(x: &[f64], y: &[f64]) -> (f64, f64) {
    let (mx, my) = (mean(x), mean(y));
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let syy: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
    let slope = sxy / sxx;
    let r2 = if syy == 0.0 { 1.0 } else { sxy * sxy / (sxx * syy) };
    (slope, r2)
}

/// Log-linear fit of a decaying series up to the first value below `floor`.
fn geometric_fit(series: &[f64], floor: f64) -> (f64, f64, usize) {
    let (mut xs, mut ys) = (Vec::new(), Vec::new());
    for (k, &v) in series.iter().enumerate() {
        if !(v > floor) {
            break;
        }
        xs.push(k as f64);
        ys.push(v.log10());
    }
    let (slope, r2) = if xs.len() >= 3 {
        linear_fit(&xs, &ys)
    } else {
        (f64::NAN, 0.0)
    };
    (slope, r2, xs.len())
}

/// Runs every check in order.
pub fn check_all() -> Vec<CheckResult> {
    vec![
        quantization_moments(),
        alpha_p_bounds(),
        without_replacement_variance(),
        prox_toolbox(),
        shuffling_variance_bounds(),
        neighborhood_scaling(),
        prox_rr_equivalence(),
        importance_resampling(),
        diana_vs_memoryless(),
        adgd_properties(),
        sdm_reductions(),
        linear_constraint_rates(),
        primal_dual_coherence(),
        fused_lasso_spectrum(),
        federated_scaling(),
        harness_determinism(),
    ]
}

// ---------------------------------------------------------------- 1

pub fn quantization_moments() -> CheckResult {
    const NAME: &str = "quantization moments";
    wrap(1, NAME, || {
        let s = RngStream::new(SEED).child("quantization");
        let delta = gaussian_vector(8, &s.child("delta"));
        let draws = 100_000usize;
        let nf = draws as f64;
        let mut t = Tally::new();
        let specs = [
            ("{8}", BlockSpec::single(8)),
            ("{4,4}", BlockSpec::new(vec![4, 4])?),
            ("{1x8}", BlockSpec::per_coordinate(8)),
        ];
        let mut worst_rel = 0.0f64;
        for p in [PNorm::One, PNorm::Two, PNorm::Inf] {
            for (label, blocks) in &specs {
                let mut rng = s.child(&format!("{p:?}{label}")).rng();
                let mut sum = Array1::<f64>::zeros(8);
                let mut sumsq = Array1::<f64>::zeros(8);
                let (mut err, mut nnz, mut nnz2) = (0.0, 0.0, 0.0);
                for _ in 0..draws {
                    let q = quant_block(&delta, p, blocks, &mut rng)?;
                    let v = q.decode();
                    sum += &v;
                    sumsq += &v.mapv(|a| a * a);
                    let e = linalg::dist_sq(&v, &delta);
                    err += e;
                    let z = q.nnz() as f64;
                    nnz += z;
                    nnz2 += z * z;
                }
                for j in 0..8 {
                    let m = sum[j] / nf;
                    let se = ((sumsq[j] / nf - m * m).max(0.0) / nf).sqrt();
                    // summation roundoff only, for coordinates the quantizer keeps exactly
                    t.check(
                        (m - delta[j]).abs() <= 4.0 * se + 1e-10 * delta[j].abs() + 1e-12,
                        || format!("p={p:?} {label} coord {j}: mean {m} vs {} (se {se:e})", delta[j]),
                    );
                }
                let want = psi(&delta, p, blocks)?;
                let got = err / nf;
                if want > 0.0 {
                    worst_rel = worst_rel.max((got - want).abs() / want);
                }
                t.check((got - want).abs() <= 0.02 * want + 1e-12, || {
                    format!("p={p:?} {label}: E|q-d|^2 {got} vs psi {want}")
                });
                let mut start = 0;
                let mut want_nnz = 0.0;
                for &len in blocks.sizes() {
                    want_nnz += expected_nnz(&delta.slice(s![start..start + len]).to_owned(), p);
                    start += len;
                }
                let m = nnz / nf;
                let se = ((nnz2 / nf - m * m).max(0.0) / nf).sqrt();
                t.check((m - want_nnz).abs() <= 3.0 * se + 1e-12, || {
                    format!("p={p:?} {label}: nnz {m} vs {want_nnz} (se {se:e})")
                });
            }
        }
        Ok(t.finish(
            1,
            NAME,
            format!("{draws} draws per case, worst variance error {:.2}%", 100.0 * worst_rel),
        ))
    })
}

// ---------------------------------------------------------------- 2

fn ratio(x: &Array1<f64>, p: PNorm) -> f64 {
    let v = x.as_slice().expect("contiguous");
    x.dot(x) / (PNorm::One.norm(v) * p.norm(v))
}

pub fn alpha_p_bounds() -> CheckResult {
    const NAME: &str = "alpha_p lower bounds";
    let mut t = Tally::new();
    let mut rng = RngStream::new(SEED).child("alpha").rng();
    let mut min_slack = f64::INFINITY;
    for d in [2usize, 4, 16] {
        let df = d as f64;
        let closed = [
            (PNorm::One, 1.0 / df),
            (PNorm::Two, 1.0 / df.sqrt()),
            (PNorm::Inf, 2.0 / (1.0 + df.sqrt())),
        ];
        for (p, want) in closed {
            t.check((alpha_p(p, d) - want).abs() <= 1e-15, || {
                format!("alpha_p({p:?}, {d}) = {}", alpha_p(p, d))
            });
        }
        for k in 0..100_000 {
            // alternate dense Gaussian and sparse heavy-tailed vectors
            let mut x = normal_vec(d, &mut rng);
            if k % 2 == 1 {
                x.mapv_inplace(|v| if rng.random::<f64>() < 0.5 { 0.0 } else { v.powi(3) });
                if x.iter().all(|&v| v == 0.0) {
                    x[0] = 1.0;
                }
            }
            for (p, a) in closed {
                let slack = ratio(&x, p) - a;
                min_slack = min_slack.min(slack);
                t.check(slack >= -1e-9, || {
                    format!("d={d} p={p:?}: ratio below bound by {slack:e}")
                });
            }
        }
        // (1, t, ..., t) with t = 1/(1+√d) attains the p = ∞ bound
        let tw = 1.0 / (1.0 + df.sqrt());
        let mut w = Array1::from_elem(d, tw);
        w[0] = 1.0;
        let gap = (ratio(&w, PNorm::Inf) - 2.0 / (1.0 + df.sqrt())).abs();
        t.check(gap <= 1e-9, || format!("d={d}: witness off by {gap:e}"));
    }
    t.finish(2, NAME, format!("min sampled slack {min_slack:.3e}"))
}

// ---------------------------------------------------------------- 3

pub fn without_replacement_variance() -> CheckResult {
    const NAME: &str = "without-replacement variance";
    wrap(3, NAME, || {
        let s = RngStream::new(SEED).child("wor");
        let mut t = Tally::new();
        let mut worst = 0.0f64;
        for n in 2..=6usize {
            let xs: Vec<Array1<f64>> = (0..n)
                .map(|i| gaussian_vector(3, &s.child(&format!("{n}/{i}"))))
                .collect();
            let xbar = xs.iter().fold(Array1::zeros(3), |a, x| a + x) / n as f64;
            let sigma2 = xs.iter().map(|x| linalg::dist_sq(x, &xbar)).sum::<f64>() / n as f64;
            for m in 1..=n {
                let exact = wor_variance_enumerated(&xs, m);
                let formula = (n - m) as f64 / (m as f64 * (n - 1) as f64) * sigma2;
                let (_, closed) = wor_stats(&xs, m)?;
                let e = (exact - formula).abs().max((closed - formula).abs());
                worst = worst.max(e);
                t.check(e <= 1e-12, || format!("n={n} m={m}: enumeration {exact} vs {formula}"));
            }
        }
        Ok(t.finish(3, NAME, format!("max deviation {worst:.2e}")))
    })
}

// ---------------------------------------------------------------- 4

/// Every prox kind on `R^d`, with random parameters.
fn prox_zoo(d: usize, rng: &mut Rng) -> Result<Vec<(&'static str, ProxTerm)>> {
    let lam = 0.1 + 1.9 * rng.random::<f64>();
    let a = normal_vec(d, rng);
    let col = a.clone().into_shape_with_order((d, 1)).expect("column");
    let b = normal(rng);
    let mut out = vec![
        ("zero", ProxTerm::zero()),
        ("l1", ProxTerm::l1(lam)?),
        ("sqnorm", ProxTerm::sqnorm(lam)?),
        ("elastic", ProxTerm::elastic(lam, 0.5 * lam)?),
        (
            "group_l2",
            ProxTerm::group_l2(vec![(0..d / 2).collect(), (d / 2..d).collect()], lam)?,
        ),
        ("hinge", ProxTerm::hinge(a.clone(), if b > 0.0 { 1.0 } else { -1.0 })?),
        ("hyperplane", ProxTerm::hyperplane(a.clone(), b)?),
        ("box", ProxTerm::boxed(-lam, 0.5 * lam)?),
        ("point", ProxTerm::point(normal_vec(d, rng))),
        ("consensus", ProxTerm::consensus(2, ProxTerm::l1(lam)?)?),
        ("comp_abs", ProxTerm::linear_comp(col.clone(), Phi::Abs(lam))?),
        ("comp_hinge", ProxTerm::linear_comp(col.clone(), Phi::Hinge)?),
        (
            "comp_interval",
            ProxTerm::linear_comp(col.clone(), Phi::Interval(b - lam, b + lam))?,
        ),
        (
            "comp_point",
            ProxTerm::linear_comp(col.clone(), Phi::Point(Array1::from(vec![b])))?,
        ),
        (
            "comp_smooth",
            ProxTerm::linear_comp(
                col,
                Phi::Smooth {
                    value: std::sync::Arc::new(|s: f64| s.cosh().ln()),
                    deriv: std::sync::Arc::new(|s: f64| s.tanh()),
                },
            )?,
        ),
        ("fused_lasso", ProxTerm::fused_lasso(0.5 * lam, lam)?),
    ];
    let am = Array2::from_shape_fn((d, d), |_| normal(rng));
    let bm = normal_vec(d, rng);
    out.push(("box_dantzig", ProxTerm::box_dantzig(&am, &bm, lam, 0)?));
    Ok(out)
}

/// Minimizes a convex `g` on `[lo, hi]`: a coarse grid picks the bracket,
/// golden-section search refines it.
fn grid_golden(g: &dyn Fn(f64) -> f64, lo: f64, hi: f64) -> (f64, f64) {
    const CELLS: usize = 40;
    let h = (hi - lo) / CELLS as f64;
    let best = (0..=CELLS)
        .map(|i| (i, g(lo + i as f64 * h)))
        .fold((0, f64::INFINITY), |acc, (i, v)| if v < acc.1 { (i, v) } else { acc });
    let (mut a, mut b) = (lo + (best.0 as f64 - 1.0) * h, lo + (best.0 as f64 + 1.0) * h);
    let r = (5f64.sqrt() - 1.0) / 2.0;
    let (mut c, mut d) = (b - r * (b - a), a + r * (b - a));
    let (mut gc, mut gd) = (g(c), g(d));
    for _ in 0..80 {
        if gc <= gd {
            b = d;
            d = c;
            gd = gc;
            c = b - r * (b - a);
            gc = g(c);
        } else {
            a = c;
            c = d;
            gc = gd;
            d = a + r * (b - a);
            gd = g(d);
        }
    }
    let x = (a + b) / 2.0;
    (x, g(x))
}

/// Minimizes `obj(o + B s)` over the box `|s_i| <= radius` by nested
/// one-dimensional searches; exact for convex `obj` up to roundoff.
fn grid_argmin(obj: &dyn Fn(&Array1<f64>) -> f64, o: &Array1<f64>, basis: &Array2<f64>, radius: f64) -> Array1<f64> {
    let at = |s: &[f64]| obj(&(o + &basis.dot(&Array1::from(s.to_vec()))));
    let s = match basis.ncols() {
        1 => vec![grid_golden(&|a| at(&[a]), -radius, radius).0],
        2 => {
            let inner = |a: f64| grid_golden(&|b| at(&[a, b]), -radius, radius);
            let a = grid_golden(&|a| inner(a).1, -radius, radius).0;
            vec![a, inner(a).0]
        }
        k => unimplemented!("grid oracle in {k} dimensions"),
    };
    o + &basis.dot(&Array1::from(s))
}

/// Distance from `u` to an indicator's set, computed without the prox;
/// the oracle adds it as an exact penalty.
fn violation(term: &ProxTerm, u: &Array1<f64>) -> f64 {
    use crate::prox::ProxKind;
    match term.kind() {
        ProxKind::Box { lo, hi } => u.iter().map(|&v| (lo - v).max(0.0) + (v - hi).max(0.0)).sum(),
        ProxKind::BoxDantzig { c, e, lambda } => ((c.dot(u) - e).abs() - lambda).max(0.0) / linalg::norm(c),
        ProxKind::LinearComp {
            a,
            phi: Phi::Interval(lo, hi),
            ..
        } => {
            let z = a.column(0).dot(u);
            ((lo - z).max(0.0) + (z - hi).max(0.0)) / linalg::norm(&a.column(0).to_owned())
        }
        _ => 0.0,
    }
}

/// `(origin, orthonormal basis)` of the affine hull of the term's domain.
fn domain_of(name: &str, term: &ProxTerm, d: usize) -> (Array1<f64>, Array2<f64>) {
    use crate::prox::ProxKind;
    let line = |o: Array1<f64>, a: &Array1<f64>| {
        // the complement of `a` in R^2
        let n = linalg::norm(a);
        let dir = Array2::from_shape_vec((2, 1), vec![-a[1] / n, a[0] / n]).expect("2x1");
        (o, dir)
    };
    match (name, term.kind()) {
        ("hyperplane", ProxKind::Hyperplane { a, b }) => line(a * (*b / a.dot(a)), a),
        (
            "comp_point",
            ProxKind::LinearComp {
                a, phi: Phi::Point(c), ..
            },
        ) => {
            let col = a.column(0).to_owned();
            line(&col * (c[0] / col.dot(&col)), &col)
        }
        ("consensus", _) => {
            let v = 1.0 / 2f64.sqrt();
            (
                Array1::zeros(2),
                Array2::from_shape_vec((2, 1), vec![v, v]).expect("2x1"),
            )
        }
        _ => (Array1::zeros(d), Array2::eye(d)),
    }
}

pub fn prox_toolbox() -> CheckResult {
    const NAME: &str = "prox toolbox";
    wrap(4, NAME, || {
        let s = RngStream::new(SEED).child("prox");
        let mut t = Tally::new();
        // firm nonexpansiveness and the strong-convexity contraction on R^4
        let mut rng = s.child("fne").rng();
        let mut pairs = 0usize;
        while pairs < 10_000 {
            for (name, term) in prox_zoo(4, &mut rng)? {
                let gamma = 0.05 + 3.0 * rng.random::<f64>();
                let x = normal_vec(4, &mut rng) * 2.0;
                let y = normal_vec(4, &mut rng) * 2.0;
                let (px, py) = (term.prox(gamma, &x), term.prox(gamma, &y));
                let dp = &px - &py;
                let lhs = dp.dot(&dp);
                let inner = dp.dot(&(&x - &y));
                t.check(lhs <= inner + 1e-10, || {
                    format!("{name}: not firmly nonexpansive ({lhs} > {inner})")
                });
                let contraction = linalg::dist_sq(&x, &y) / (1.0 + 2.0 * gamma * term.mu());
                t.check(lhs <= contraction + 1e-10, || {
                    format!("{name}: contraction {lhs} > {contraction}")
                });
                pairs += 1;
            }
        }
        // grid oracle on R^2 (one-dimensional for the line sets)
        let mut rng = s.child("oracle").rng();
        let mut worst = 0.0f64;
        for _ in 0..100 {
            for (name, term) in prox_zoo(2, &mut rng)? {
                let gamma = 0.1 + 1.9 * rng.random::<f64>();
                let v = normal_vec(2, &mut rng) * 2.0;
                let p = term.prox(gamma, &v);
                if name == "point" {
                    let want = match term.kind() {
                        crate::prox::ProxKind::Point { b } => b.clone(),
                        _ => unreachable!(),
                    };
                    let e = linalg::dist_sq(&p, &want).sqrt();
                    t.check(e <= 1e-12, || format!("point: {e:e}"));
                    continue;
                }
                // on the parametrized lines the indicator is identically 0
                let obj = |u: &Array1<f64>| {
                    term.finite_value(u) + 1e3 * violation(&term, u) + linalg::dist_sq(u, &v) / (2.0 * gamma)
                };
                let (o, basis) = domain_of(name, &term, 2);
                let g = grid_argmin(&obj, &o, &basis, 4.0 * (1.0 + linalg::norm(&v) + linalg::norm(&o)));
                let e = linalg::dist_sq(&p, &g).sqrt();
                worst = worst.max(e);
                t.check(e <= 1e-4, || format!("{name}: prox {p} vs grid {g} (gamma {gamma})"));
            }
        }
        Ok(t.finish(4, NAME, format!("{pairs} pairs, worst oracle gap {worst:.1e}")))
    })
}

// ---------------------------------------------------------------- 5, 6

/// A random orthogonal matrix from the eigenvectors of a symmetric Gaussian one.
fn random_rotation(d: usize, rng: &mut Rng) -> Array2<f64> {
    let g = Array2::from_shape_fn((d, d), |_| normal(rng));
    linalg::sym_eigen(&(&g + &g.t())).1
}

/// `f_i(x) = (x - c_i)^T H_i (x - c_i)/2` with the spectrum of every `H_i`
/// spread evenly over `[mu, l]`; one shared rotation when `common`.
/// Returns the objective and its exact minimizer.
fn rotated_quadratics(
    n: usize,
    d: usize,
    mu: f64,
    l: f64,
    common: bool,
    rng: &mut Rng,
) -> Result<(FiniteSumObjective, Array1<f64>)> {
    let spectrum = Array1::from_shape_fn(d, |j| {
        if d == 1 {
            l
        } else {
            mu + (l - mu) * j as f64 / (d - 1) as f64
        }
    });
    let shared = random_rotation(d, rng);
    let mut hs = Vec::with_capacity(n);
    let mut cs = Vec::with_capacity(n);
    let mut hsum = Array2::<f64>::zeros((d, d));
    let mut rhs = Array1::<f64>::zeros(d);
    for _ in 0..n {
        let q = if common {
            shared.clone()
        } else {
            random_rotation(d, rng)
        };
        let h = q.dot(&Array2::from_diag(&spectrum)).dot(&q.t());
        let h = (&h + &h.t()) / 2.0;
        let c = normal_vec(d, rng);
        hsum += &h;
        rhs += &h.dot(&c);
        hs.push(h);
        cs.push(c);
    }
    let x = linalg::solve(&hsum, &rhs).expect("sum of positive definite matrices");
    Ok((make_quadratic_sum(hs, cs)?, x))
}

/// Quadratics sharing eigenvectors whose per-component curvatures scatter
/// around a common spectrum on `[mu, l]`, so the sum has condition number
/// exactly `l / mu`.
fn scattered_quadratics(
    n: usize,
    d: usize,
    mu: f64,
    l: f64,
    rng: &mut Rng,
) -> Result<(FiniteSumObjective, Array1<f64>)> {
    let q = random_rotation(d, rng);
    let mut w = Array2::from_shape_fn((n, d), |_| 0.2 + 1.6 * rng.random::<f64>());
    for mut col in w.columns_mut() {
        let m = col.mean().expect("n > 0");
        col.mapv_inplace(|v| v / m);
    }
    let mut hs = Vec::with_capacity(n);
    let mut cs = Vec::with_capacity(n);
    let mut hsum = Array2::<f64>::zeros((d, d));
    let mut rhs = Array1::<f64>::zeros(d);
    for i in 0..n {
        let diag = Array1::from_shape_fn(d, |j| (mu + (l - mu) * j as f64 / (d - 1) as f64) * w[[i, j]]);
        let h = q.dot(&Array2::from_diag(&diag)).dot(&q.t());
        let h = (&h + &h.t()) / 2.0;
        let c = normal_vec(d, rng);
        hsum += &h;
        rhs += &h.dot(&c);
        hs.push(h);
        cs.push(c);
    }
    let x = linalg::solve(&hsum, &rhs).expect("sum of positive definite matrices");
    Ok((make_quadratic_sum(hs, cs)?, x))
}

fn exact_reference(f: &FiniteSumObjective, x: &Array1<f64>) -> Reference {
    Reference {
        x: x.clone(),
        f: f.value(x),
    }
}

pub fn shuffling_variance_bounds() -> CheckResult {
    const NAME: &str = "shuffling variance bounds";
    wrap(5, NAME, || {
        let s = RngStream::new(SEED).child("shuffle-variance");
        let (mu, l) = (1.0, 10.0);
        let (f, xs) = rotated_quadratics(5, 3, mu, l, false, &mut s.child("f").rng())?;
        let sigma = f.sigma_star(&xs);
        let n = 5.0;
        let mut t = Tally::new();
        let mut report = Vec::new();
        for gamma in [1.0 / l, 1.0 / (10.0 * l)] {
            let v = shuffling_variance(&f, &xs, gamma, 120, &s);
            let (lo, hi) = (gamma * mu * n / 8.0 * sigma, gamma * l * n / 4.0 * sigma);
            report.push(format!("γ={gamma}: {lo:.4} <= {v:.4} <= {hi:.4}"));
            t.check(v >= lo - 1e-9 && v <= hi + 1e-9, || {
                format!("γ={gamma}: {v} not in [{lo}, {hi}]")
            });
        }
        Ok(t.finish(5, NAME, report.join(", ")))
    })
}

/// Mean of `dist_sq` over the last `tail` rows, averaged over runs.
fn plateau(traces: &[MetricTrace], tail: usize) -> f64 {
    let per: Vec<f64> = traces
        .iter()
        .map(|t| {
            let d = t.dist_sq();
            mean(&d[d.len() - tail..])
        })
        .collect();
    mean(&per)
}

pub fn neighborhood_scaling() -> CheckResult {
    const NAME: &str = "neighborhood scaling";
    wrap(6, NAME, || {
        let s = RngStream::new(SEED).child("neighborhood");
        let (n, d, mu, l) = (50, 10, 1.0, 50.0);
        let (f, xs) = scattered_quadratics(n, d, mu, l, &mut s.child("f").rng())?;
        let r = exact_reference(&f, &xs);
        let l = f.max_smoothness();
        let (epochs, tail, seeds) = (200, 100, 20u64);
        // the γ² regime; far below 1/(5L) the epoch-end plateau scales like γ³
        let gamma = 1.0 / (5.0 * l);
        let rr = |g: f64| -> Vec<MetricTrace> {
            (0..seeds)
                .map(|k| {
                    let mut sched = PermutationSchedule::new(OrderingKind::Rr, n, &s.child(&format!("rr{k}")));
                    run_shuffled(
                        &f,
                        &mut sched,
                        &StepsizeSchedule::Constant { gamma: g },
                        epochs,
                        &xs,
                        Some(&r),
                    )
                })
                .collect()
        };
        let sgd = |g: f64| -> Vec<MetricTrace> {
            (0..seeds)
                .map(|k| {
                    let st = s.child(&format!("sgd{k}"));
                    run_sgd(
                        &f,
                        &ProxTerm::zero(),
                        &StepsizeSchedule::Constant { gamma: g },
                        epochs,
                        &xs,
                        &st,
                        Some(&r),
                    )
                })
                .collect()
        };
        let rr_factor = plateau(&rr(gamma), tail) / plateau(&rr(gamma / 2.0), tail);
        let sgd_factor = plateau(&sgd(gamma), tail) / plateau(&sgd(gamma / 2.0), tail);
        let mut t = Tally::new();
        t.check((3.0..=5.0).contains(&rr_factor), || {
            format!("RR factor {rr_factor:.3} outside [3, 5]")
        });
        t.check((1.6..=2.5).contains(&sgd_factor), || {
            format!("SGD factor {sgd_factor:.3} outside [1.6, 2.5]")
        });
        Ok(t.finish(6, NAME, format!("RR factor {rr_factor:.3}, SGD factor {sgd_factor:.3}")))
    })
}

// ---------------------------------------------------------------- 7

pub fn prox_rr_equivalence() -> CheckResult {
    const NAME: &str = "ProxRR end-of-epoch equivalence";
    wrap(7, NAME, || {
        let s = RngStream::new(SEED).child("proxrr");
        let mut t = Tally::new();
        let mut worst = 0.0f64;
        let mut min_gap = f64::INFINITY;
        for k in 0..20 {
            let mut rng = s.child(&k.to_string()).rng();
            let n = 2 + k % 5;
            let d = 2 + k % 3;
            let c: Vec<Array1<f64>> = (0..n).map(|_| normal_vec(d, &mut rng)).collect();
            let f = make_linear_sum(c)?;
            let psi = ProxTerm::sqnorm(0.5 + rng.random::<f64>())?;
            let gamma = 0.05 + 0.3 * rng.random::<f64>();
            let x0 = normal_vec(d, &mut rng);
            let order: Vec<usize> = (0..n).collect();
            let st = StepsizeSchedule::Constant { gamma };
            let mut ig = PermutationSchedule::incremental(order.clone())?;
            let got = run_prox_rr(&f, &psi, &mut ig, &st, 1, &x0, None)
                .final_x
                .expect("final iterate");
            // linear components: the epoch is one step of length nγ, then prox_{nγψ}
            let mut u = x0.clone();
            u.scaled_add(-(n as f64) * gamma, &f.grad(&x0));
            let want = psi.prox(n as f64 * gamma, &u);
            let e = linalg::dist_sq(&got, &want).sqrt();
            worst = worst.max(e);
            t.check(e <= 1e-14, || format!("instance {k}: {e:e}"));
            let mut ig = PermutationSchedule::incremental(order)?;
            let per = run_prox_per_iteration(&f, &psi, &mut ig, &st, 1, &x0, None)
                .final_x
                .expect("final iterate");
            let gap = linalg::dist_sq(&per, &want).sqrt();
            min_gap = min_gap.min(gap);
            t.check(gap > 1e-6, || {
                format!("instance {k}: per-iteration prox only {gap:e} away")
            });
        }
        Ok(t.finish(
            7,
            NAME,
            format!("max error {worst:.1e}, min per-iteration gap {min_gap:.2e}"),
        ))
    })
}

// ---------------------------------------------------------------- 8

pub fn importance_resampling() -> CheckResult {
    const NAME: &str = "importance resampling";
    wrap(8, NAME, || {
        let s = RngStream::new(SEED).child("resample");
        let mut t = Tally::new();
        let mut max_ratio = 0.0f64;
        for k in 0..100 {
            let mut rng = s.child(&k.to_string()).rng();
            let n = 2 + (rng.random::<f64>() * 30.0) as usize;
            let d = 3;
            let ls: Vec<f64> = (0..n).map(|_| (6.0 * rng.random::<f64>() - 3.0).exp()).collect();
            let hs = ls.iter().map(|&l| Array2::eye(d) * l).collect();
            let cs = (0..n).map(|_| normal_vec(d, &mut rng)).collect();
            let f = make_quadratic_sum(hs, cs)?;
            let g = importance_resample(&f);
            t.check(g.n() <= 2 * n, || {
                format!("profile {k}: N = {} > 2n = {}", g.n(), 2 * n)
            });
            for _ in 0..5 {
                let x = normal_vec(d, &mut rng) * 3.0;
                let (a, b) = (f.value(&x), g.value(&x));
                t.check((a - b).abs() <= 1e-12 * a.abs().max(1.0), || {
                    format!("profile {k}: value {a} vs {b}")
                });
            }
            let lbar = f.mean_smoothness();
            let lmax = g.max_smoothness();
            max_ratio = max_ratio.max(lmax / lbar);
            t.check(lmax <= lbar * (1.0 + 1e-12), || {
                format!("profile {k}: max L {lmax} > mean {lbar}")
            });
        }
        Ok(t.finish(8, NAME, format!("max L/L̄ after resampling {max_ratio:.12}")))
    })
}

// ---------------------------------------------------------------- 9

pub fn diana_vs_memoryless() -> CheckResult {
    const NAME: &str = "DIANA vs memoryless";
    wrap(9, NAME, || {
        let s = RngStream::new(SEED).child("diana");
        let ds = synthetic_classification(80, 20, true, &s.child("data"));
        let f = make_logistic(&ds, 0.1)?;
        let workers = 4;
        let fp = partition(&f, workers, PartitionMode::Contiguous, &s.child("partition"))?;
        let (xs, fs) = reference_solution(&fp.global, &ProxTerm::zero(), 1e-14)?;
        let r = Reference { x: xs, f: fs };
        let p = PNorm::Two;
        let blocks = BlockSpec::single(20);
        let (alpha, _, gamma) =
            diana_default_params(fp.max_smoothness(), fp.global.strong_convexity(), workers, p, &blocks)?;
        let rounds = 3000;
        let mut opts = DianaOptions {
            quantizer: Some((p, blocks.clone())),
            alpha,
            gamma: StepsizeSchedule::Constant { gamma },
            beta: 0.0,
            rounds,
            batch: None,
        };
        let diana = diana_run(&fp, &ProxTerm::zero(), &opts, &s.child("run"), Some(&r))?;
        opts.alpha = 0.0;
        let memless = diana_run(&fp, &ProxTerm::zero(), &opts, &s.child("run"), Some(&r))?;
        let last = |t: &MetricTrace| t.last().map(|r| r.dist_sq).unwrap_or(f64::NAN);
        let tail = |t: &MetricTrace| mean(&t.dist_sq()[rounds - 500..]);
        let (dd, dm) = (last(&diana), tail(&memless));
        let mut t = Tally::new();
        t.check(dd <= 1e-8, || format!("DIANA ends at |x-x*|^2 = {dd:e}"));
        t.check(dm >= 10.0 * dd.max(tail(&diana)), || {
            format!("memoryless plateau {dm:e} not 10x above {dd:e}")
        });
        // the prescribed parameters satisfy the step condition
        for p in [PNorm::One, PNorm::Two, PNorm::Inf] {
            for blocks in [
                BlockSpec::single(20),
                BlockSpec::uniform(20, 5)?,
                BlockSpec::uniform(20, 3)?,
            ] {
                for m in [1usize, 4, 16] {
                    let (a, c, _) = diana_default_params(1.0, 0.1, m, p, &blocks)?;
                    let ap = alpha_p(p, blocks.max_block());
                    let lhs = diana_condition(m, c, a);
                    t.check(lhs <= ap + 1e-12, || format!("p={p:?} M={m}: {lhs} > {ap}"));
                }
            }
        }
        Ok(t.finish(9, NAME, format!("DIANA {dd:.2e}, memoryless plateau {dm:.2e}")))
    })
}

// ---------------------------------------------------------------- 10

pub fn adgd_properties() -> CheckResult {
    const NAME: &str = "AdGD";
    wrap(10, NAME, || {
        let mut t = Tally::new();
        let quartic = FnSmooth {
            dim: 1,
            value: |x: &Array1<f64>| x[0].powi(4) / 4.0,
            grad: |x: &Array1<f64>| x.mapv(|v| v.powi(3)),
        };
        let tr = run_adgd(
            &quartic,
            AdgdRule::Standard,
            &Array1::from(vec![2.0]),
            DEFAULT_GAMMA0,
            10_000,
            None,
        )?;
        let x_end = tr.final_x.clone().expect("final iterate");
        let steps_needed = {
            let mut a = Adgd::new(AdgdRule::Standard, Array1::from(vec![2.0]), DEFAULT_GAMMA0)?;
            let mut k = 0;
            while (a.x()[0].powi(4) / 4.0) > 1e-6 && k < 10_000 {
                a.step(&quartic);
                k += 1;
            }
            k
        };
        let fq = x_end[0].powi(4) / 4.0;
        t.check(fq <= 1e-6, || format!("x^4/4 ends at {fq:e}"));
        t.check(steps_needed < 10_000, || "x^4/4 never reached 1e-6".into());
        // quadratic with known L: every stepsize after the first is >= 1/(2L)
        let s = RngStream::new(SEED).child("adgd");
        let (f, xs) = rotated_quadratics(10, 5, 0.5, 8.0, false, &mut s.rng())?;
        let l = f.smoothness();
        let r = exact_reference(&f, &xs);
        let tq = run_adgd(&f, AdgdRule::Standard, &Array1::zeros(5), DEFAULT_GAMMA0, 300, Some(&r))?;
        // once x^k sits at roundoff level the difference quotients are noise
        let gammas = &tq.aux["gamma"];
        let min_gamma = (1..gammas.len())
            .take_while(|&k| tq.rows[k].dist_sq > 1e-16)
            .map(|k| gammas[k])
            .fold(f64::INFINITY, f64::min);
        t.check(min_gamma >= 1.0 / (2.0 * l) - 1e-12, || {
            format!("min γ_k {min_gamma} < 1/(2L) = {}", 0.5 / l)
        });
        // ergodic weights stay nonnegative on both problems, relative to
        // the stepsize scale (the quartic run pushes γ_k towards 1e300)
        let mut min_w = f64::INFINITY;
        let mut a = Adgd::new(AdgdRule::Standard, Array1::zeros(5), DEFAULT_GAMMA0)?;
        for _ in 0..300 {
            a.step(&f);
        }
        let mut b = Adgd::new(AdgdRule::Standard, Array1::from(vec![2.0]), DEFAULT_GAMMA0)?;
        for _ in 0..2000 {
            b.step(&quartic);
        }
        for run in [&a, &b] {
            for (j, w) in run.ergodic.weights.iter().enumerate() {
                min_w = min_w.min(w / run.gammas[j].max(run.gammas[j + 1]));
            }
        }
        t.check(min_w >= -1e-12, || format!("ergodic weight {min_w}"));
        Ok(t.finish(
            10,
            NAME,
            format!(
                "quartic f {fq:.1e} after {steps_needed} steps to 1e-6, min γL {:.3}, min weight {min_w:.1e}",
                min_gamma * l
            ),
        ))
    })
}

// ---------------------------------------------------------------- 11

fn max_gap(a: &[Array1<f64>], b: &[Array1<f64>]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| linalg::dist_sq(x, y).sqrt())
        .fold(0.0, f64::max)
}

pub fn sdm_reductions() -> CheckResult {
    const NAME: &str = "SDM reductions";
    wrap(11, NAME, || {
        let s = RngStream::new(SEED).child("sdm");
        let mut t = Tally::new();
        let (w, b, _) = gaussian_system(20, &s.child("system"));
        let x0 = Array1::zeros(20);
        let mut kac = 0.0f64;
        for order in [IndexOrder::Random, IndexOrder::Cyclic] {
            let k1 = kaczmarz_iterates(&w, &b, &x0, 200, order, &s.child("k"))?;
            let k2 = sdm_kaczmarz_iterates(&w, &b, &x0, 200, order, &s.child("k"))?;
            let e = max_gap(&k1, &k2);
            kac = kac.max(e);
            t.check(k1.len() == 201 && e <= 1e-12, || {
                format!("{order:?} Kaczmarz gap {e:e}")
            });
        }
        let d = 10;
        let (a, bb) = random_constraints(&ConstraintSpec { rows: 6, rank: Some(4) }, d, &s.child("constraints"));
        let f = make_least_squares(
            gaussian_matrix(30, d, &s.child("A")),
            gaussian_vector(30, &s.child("y")),
            0.1,
        )?;
        let g = hyperplanes(&a, &bb)?;
        let mut lean_gap = 0.0f64;
        for est in [
            EstimatorKind::FullGd,
            EstimatorKind::Sgd,
            EstimatorKind::Saga,
            EstimatorKind::Svrg { loop_len: None },
        ] {
            let opts = SdmOptions {
                estimator: est,
                batch: 1,
                stepsize: SdmStepsize::Constant {
                    gamma: 0.5 / f.max_smoothness(),
                },
                probs: Some(importance_probs(&a)),
                order: IndexOrder::Random,
                steps: 0,
            };
            let x0 = Array1::zeros(d);
            let mut full = Sdm::new(&f, &g, &opts, &x0, &s.child("run"))?;
            let mut lean = SdmLinear::new(&f, &a, &bb, &opts, &x0, &s.child("run"))?;
            for _ in 0..300 {
                full.step(&f, &ProxTerm::zero(), &g);
                lean.step(&f, &ProxTerm::zero());
                lean_gap = lean_gap.max(linalg::dist_sq(&full.x, &lean.x).sqrt());
            }
            t.check(lean_gap <= 1e-12, || {
                format!("{est:?}: memory-efficient gap {lean_gap:e}")
            });
        }
        Ok(t.finish(
            11,
            NAME,
            format!("Kaczmarz gap {kac:.1e}, memory-efficient gap {lean_gap:.1e}"),
        ))
    })
}

// ---------------------------------------------------------------- 12

/// `argmin f` over `{A x = b}` for a quadratic `f`, by reduction to the
/// null space of `A`.
fn constrained_quadratic_min(f: &FiniteSumObjective, a: &Array2<f64>, b: &Array1<f64>) -> Result<Array1<f64>> {
    let d = f.dim();
    let (_, x_min) = affine_set(a, b)?;
    let (vals, vecs) = linalg::sym_eigen(&a.t().dot(a));
    let top = vals.last().copied().unwrap_or(0.0);
    let null: Vec<usize> = (0..d).filter(|&i| vals[i] <= linalg::RANGE_TOL * top).collect();
    let n = Array2::from_shape_fn((d, null.len()), |(r, c)| vecs[[r, null[c]]]);
    let g0 = f.grad(&Array1::zeros(d));
    let h = Array2::from_shape_fn((d, d), |(_, _)| 0.0);
    let mut h = h;
    for j in 0..d {
        let mut e = Array1::zeros(d);
        e[j] = 1.0;
        h.column_mut(j).assign(&(f.grad(&e) - &g0));
    }
    let h = (&h + &h.t()) / 2.0;
    let reduced = n.t().dot(&h).dot(&n);
    let rhs = -n.t().dot(&f.grad(&x_min));
    let z = linalg::solve(&reduced, &rhs).expect("f is strongly convex");
    Ok(x_min + n.dot(&z))
}

pub fn linear_constraint_rates() -> CheckResult {
    const NAME: &str = "linear-constraint linear rate";
    wrap(12, NAME, || {
        let s = RngStream::new(SEED).child("linear-rate");
        let d = 10;
        let f = make_least_squares(
            gaussian_matrix(40, d, &s.child("A")),
            gaussian_vector(40, &s.child("y")),
            0.1,
        )?;
        let (a, b) = random_constraints(&ConstraintSpec { rows: 8, rank: Some(5) }, d, &s.child("constraints"));
        let xs = constrained_quadratic_min(&f, &a, &b)?;
        let r = exact_reference(&f, &xs);
        let mut t = Tally::new();
        let est = EstimatorKind::Svrg { loop_len: None };
        let preset = EstimatorConstants::preset(est, &f)?;
        let opts = SdmOptions {
            estimator: est,
            batch: 1,
            stepsize: SdmStepsize::Constant {
                gamma: preset.gamma_max,
            },
            probs: None,
            order: IndexOrder::Random,
            steps: 6000,
        };
        let sdm = sdm_linear_run(
            &f,
            &ProxTerm::zero(),
            &a,
            &b,
            &opts,
            &Array1::zeros(d),
            &s.child("sdm"),
            Some(&r),
        )?;
        let (slope, r2, used) = geometric_fit(&sdm.dist_sq(), 1e-20);
        t.check(slope < 0.0 && r2 >= 0.95, || {
            format!("SDM-SVRG slope {slope:e}, R² {r2:.4} over {used} steps")
        });
        let l = LinOp::Dense(a.clone());
        let gamma = 1.0 / f.smoothness();
        let po = PdOptions {
            gamma,
            tau: 0.9 / (gamma * spectral_norm(&l).powi(2)),
            estimator: EstimatorKind::FullGd,
            batch: 1,
            steps: 3000,
            init: PddyInit::FromPrimal,
        };
        let lico = licosgd_run(&f, &l, &b, &po, &Array1::zeros(d), None, &s.child("lico"), Some(&r))?;
        let (lslope, lr2, lused) = geometric_fit(&lico.dist_sq(), 1e-20);
        t.check(lslope < 0.0 && lr2 >= 0.95, || {
            format!("LiCoSGD slope {lslope:e}, R² {lr2:.4} over {lused} steps")
        });
        let infeas = &lico.aux["infeasibility"];
        let (islope, ir2, _) = geometric_fit(infeas, 1e-13);
        t.check(islope < 0.0 && ir2 >= 0.95, || {
            format!("LiCoSGD |Lx-b| slope {islope:e}, R² {ir2:.4}")
        });
        Ok(t.finish(
            12,
            NAME,
            format!("SDM-SVRG R² {r2:.4} (slope {slope:.2e}/step), LiCoSGD R² {lr2:.4} (slope {lslope:.2e}/step)"),
        ))
    })
}

// ---------------------------------------------------------------- 13

pub fn primal_dual_coherence() -> CheckResult {
    const NAME: &str = "PDDY/PD3O/LiCoSGD coherence";
    wrap(13, NAME, || {
        let s = RngStream::new(SEED).child("pd");
        let mut t = Tally::new();
        let d = 8;
        let f = make_least_squares(
            gaussian_matrix(16, d, &s.child("A")),
            gaussian_vector(16, &s.child("y")),
            0.1,
        )?;
        let (a, b) = random_constraints(&ConstraintSpec { rows: 3, rank: None }, d, &s.child("constraints"));
        let r = exact_reference(&f, &constrained_quadratic_min(&f, &a, &b)?);
        let l = LinOp::Dense(a);
        let (psi, h) = (ProxTerm::zero(), ProxTerm::point(b.clone()));
        let prob = PdProblem {
            f: &f,
            psi: &psi,
            h: &h,
            l: &l,
        };
        let gamma = 0.5 / f.smoothness();
        let mut worst = 0.0f64;
        for est in [EstimatorKind::FullGd, EstimatorKind::Saga] {
            let o = PdOptions {
                gamma,
                tau: 0.9 / (gamma * spectral_norm(&l).powi(2)),
                estimator: est,
                batch: 1,
                steps: 400,
                init: PddyInit::FromPrimal,
            };
            let x0 = Array1::zeros(d);
            let st = s.child("run");
            let p = pddy_run(&prob, &o, &x0, &st, Some(&r))?;
            let q = pd3o_run(&prob, &o, &x0, &st, Some(&r))?;
            let c = licosgd_run(&f, &l, &b, &o, &x0, None, &st, Some(&r))?;
            t.check(p.rows.len() == q.rows.len() && q.rows.len() == c.rows.len(), || {
                format!("{est:?}: row counts differ")
            });
            for ((rp, rq), rc) in p.rows.iter().zip(&q.rows).zip(&c.rows) {
                let e = (rp.dist_sq - rq.dist_sq)
                    .abs()
                    .max((rp.f_gap - rq.f_gap).abs())
                    .max((rp.dist_sq - rc.dist_sq).abs());
                worst = worst.max(e);
            }
            let fx = |t: &MetricTrace| t.final_x.clone().expect("final iterate");
            let e = linalg::dist_sq(&fx(&p), &fx(&q))
                .sqrt()
                .max(linalg::dist_sq(&fx(&p), &fx(&c)).sqrt());
            worst = worst.max(e);
            t.check(worst <= 1e-12, || format!("{est:?}: traces differ by {worst:e}"));
            if est == EstimatorKind::FullGd {
                let feas = linalg::norm(&(l.apply(&fx(&p)) - &b));
                t.check(feas <= 1e-6, || format!("|Lx - b| = {feas:e} at termination"));
            }
        }
        // fused lasso, d = 30
        let d = 30;
        let f = make_least_squares(
            gaussian_matrix(40, d, &s.child("fl")),
            gaussian_vector(40, &s.child("fl-y")),
            0.05,
        )?;
        let (l1, tv) = (0.02, 0.1);
        let (_, fstar) = reference_solution(&f, &ProxTerm::fused_lasso(l1, tv)?, 1e-13)?;
        let psi = ProxTerm::l1(l1)?;
        let h = ProxTerm::l1(tv)?;
        let l = LinOp::Difference(d);
        let prob = PdProblem {
            f: &f,
            psi: &psi,
            h: &h,
            l: &l,
        };
        let ln2 = spectral_norm(&l).powi(2);
        let gamma = 1.0 / f.smoothness();
        let o = PdOptions {
            gamma,
            tau: 0.99 / (gamma * ln2),
            estimator: EstimatorKind::FullGd,
            batch: 1,
            steps: 5000,
            init: PddyInit::FromPrimal,
        };
        let x0 = Array1::zeros(d);
        let st = s.child("fl-run");
        let mut gaps = Vec::new();
        for (name, tr) in [
            ("PDDY", pddy_run(&prob, &o, &x0, &st, None)?),
            ("PD3O", pd3o_run(&prob, &o, &x0, &st, None)?),
            (
                "Condat-Vu",
                condat_vu_run(
                    &prob,
                    1.0 / f.smoothness(),
                    0.49 * f.smoothness() / ln2,
                    5000,
                    CvForm::I,
                    &x0,
                    None,
                )?,
            ),
        ] {
            let v = prob.value(tr.final_x.as_ref().expect("final iterate"));
            let gap = (v - fstar).abs();
            gaps.push(gap);
            t.check(gap <= 1e-6, || format!("{name}: objective {v} vs {fstar}"));
        }
        let worst_gap = gaps.iter().cloned().fold(0.0, f64::max);
        Ok(t.finish(
            13,
            NAME,
            format!("trace difference {worst:.1e}, fused-lasso objective gap {worst_gap:.1e}"),
        ))
    })
}

// ---------------------------------------------------------------- 14

pub fn fused_lasso_spectrum() -> CheckResult {
    const NAME: &str = "fused-lasso spectrum";
    let mut t = Tally::new();
    let mut worst = 0.0f64;
    for d in [4usize, 10, 50] {
        let dm = fused_difference(d);
        let ev = linalg::sym_eigenvalues(&dm.dot(&dm.t()));
        let want = fused_spectrum(d);
        t.check(ev.len() == want.len(), || format!("d={d}: {} eigenvalues", ev.len()));
        for (k, (a, b)) in ev.iter().zip(&want).enumerate() {
            let closed = 2.0 - 2.0 * ((k + 1) as f64 * std::f64::consts::PI / d as f64).cos();
            let e = (a - b).abs().max((b - closed).abs());
            worst = worst.max(e);
            t.check(e <= 1e-9, || format!("d={d} k={}: {a} vs {closed}", k + 1));
        }
    }
    t.finish(14, NAME, format!("max deviation {worst:.1e}"))
}

// ---------------------------------------------------------------- 15

pub fn federated_scaling() -> CheckResult {
    const NAME: &str = "FedRR scaling";
    wrap(15, NAME, || {
        let s = RngStream::new(SEED).child("fedrr");
        let (f, xs) = rotated_quadratics(20, 5, 1.0, 10.0, true, &mut s.child("f").rng())?;
        let r = exact_reference(&f, &xs);
        let gamma = 1.0 / (10.0 * 10.0);
        let (epochs, tail, seeds) = (200, 100, 20u64);
        let plateau_for = |m: usize| -> Result<f64> {
            let mut traces = Vec::new();
            for k in 0..seeds {
                let st = s.child(&format!("M{m}/{k}"));
                let fp = partition(&f, m, PartitionMode::Replicate, &st)?;
                traces.push(fed_rr(&fp, gamma, epochs, OrderingKind::Rr, &st, &xs, Some(&r))?);
            }
            Ok(plateau(&traces, tail))
        };
        let factor = plateau_for(4)? / plateau_for(8)?;
        let mut t = Tally::new();
        t.check((1.5..=3.0).contains(&factor), || {
            format!("plateau factor {factor:.3} outside [1.5, 3]")
        });
        // Local SGD with one local step per round is minibatch SGD
        let ds = synthetic_classification(40, 5, false, &s.child("data"));
        let g = make_logistic(&ds, 0.1)?;
        let fp = partition(&g, 4, PartitionMode::Shuffled, &s.child("partition"))?;
        let opts = LocalSgdOptions {
            gamma: 0.1,
            steps: 100,
            batch: 2,
            record_every: 1,
        };
        let a = local_sgd(&fp, &SyncSchedule::Every { h: 1 }, &opts, &s.child("local"), None)?;
        let b = minibatch_sgd(&fp, &opts, &s.child("local"), None)?;
        let same_rows = a.rows.len() == b.rows.len() && a.rows.iter().zip(&b.rows).all(|(x, y)| x.same_metrics(y));
        let same_x = a.final_x == b.final_x;
        t.check(same_rows && same_x, || {
            "local SGD with H = 1 differs from minibatch SGD".into()
        });
        Ok(t.finish(
            15,
            NAME,
            format!(
                "plateau factor {factor:.3} for M 4 -> 8, H = 1 bitwise equal: {}",
                same_rows && same_x
            ),
        ))
    })
}

// ---------------------------------------------------------------- 16

/// The CSV text without the `wall_ns` column.
pub fn csv_without_wall(t: &MetricTrace) -> String {
    t.to_csv_string()
        .lines()
        .map(|l| l.rsplit_once(',').map(|(head, _)| head).unwrap_or(l))
        .collect::<Vec<_>>()
        .join("\n")
}

pub fn harness_determinism() -> CheckResult {
    const NAME: &str = "harness determinism";
    let mut t = Tally::new();
    for (name, text) in BUNDLED {
        let res = RunConfig::from_json(text).and_then(|cfg| Ok((run(&cfg)?, run(&cfg)?)));
        match res {
            Ok((a, b)) => {
                t.check(csv_without_wall(&a) == csv_without_wall(&b), || {
                    format!("{name}: CSV differs between runs")
                });
                t.check(a.metadata == b.metadata, || format!("{name}: metadata differs"));
            }
            Err(e) => t.check(false, || format!("{name}: {e}")),
        }
    }
    t.finish(16, NAME, format!("{} bundled configs byte-identical", BUNDLED.len()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn linear_fit_exact_line() {
        let x = [0.0, 1.0, 2.0, 3.0];
        let y = [1.0, -1.0, -3.0, -5.0];
        let (slope, r2) = linear_fit(&x, &y);
        assert!((slope + 2.0).abs() < 1e-15 && (r2 - 1.0).abs() < 1e-15);
    }

    #[test]
    fn geometric_fit_stops_at_floor() {
        let v: Vec<f64> = (0..40).map(|k| 0.5f64.powi(k)).collect();
        let (slope, r2, used) = geometric_fit(&v, 1e-6);
        assert_eq!(used, 20);
        assert!((slope - 0.5f64.log10()).abs() < 1e-12 && r2 > 0.999_999);
    }

    #[test]
    fn grid_oracle_finds_a_smooth_minimum() {
        let obj = |u: &Array1<f64>| (u[0] - 0.3).powi(2) + 2.0 * (u[1] + 1.2).powi(2);
        let g = grid_argmin(&obj, &Array1::zeros(2), &Array2::eye(2), 10.0);
        assert!((g[0] - 0.3).abs() < 1e-8 && (g[1] + 1.2).abs() < 1e-8);
    }

    #[test]
    fn wall_column_is_dropped() {
        let mut t = MetricTrace::new();
        t.rows.push(crate::harness::TraceRow {
            wall_ns: 99,
            ..Default::default()
        });
        let text = csv_without_wall(&t);
        assert!(text.starts_with("step,grads,proxes,bits,f_gap,dist_sq\n"));
        assert!(text.lines().all(|l| l.split(',').count() == 6 && !l.contains("99")));
    }
}
