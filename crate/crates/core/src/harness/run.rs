//! Builds the problem named by a [`RunConfig`], solves it to reference
//! accuracy and dispatches to the requested solver.

use ndarray::{Array1, Array2};

use super::config::*;
use super::trace::{MetricTrace, Reference};
use crate::adaptive::{run_adgd, run_adgd_accel, run_adsgd};
use crate::error::{OptError, Result};
use crate::federated::{fed_rr, local_sgd, minibatch_sgd, partition, FederatedProblem, LocalSgdOptions, PartitionMode};
use crate::linalg;
use crate::problems::{
    gaussian_matrix, gaussian_system, gaussian_vector, make_least_squares, make_logistic, parse_libsvm,
    reference_solution, synthetic_classification, Dataset, FiniteSumObjective,
};
use crate::prox::{Phi, ProxTerm};
use crate::quantize::{diana_default_params, diana_run, terngrad_run, BlockSpec, DianaOptions};
use crate::rng::RngStream;
use crate::shuffle::{
    run_prox_per_iteration, run_prox_rr, run_sgd, run_shuffled, OrderingKind, PermutationSchedule, StepsizeSchedule,
};
use crate::splitting::{
    condat_vu_run, destroy_run, hyperplanes, licosgd_run, pd3o_run, pddy_run, prilicosgd_run, randomized_kaczmarz,
    sdm_kaczmarz_mode, sdm_linear_run, sdm_run, LinOp, PdOptions, PdProblem, SdmOptions,
};

/// A problem instance built from a [`ProblemSpec`].
#[derive(Clone, Debug)]
pub struct Instance {
    pub data: Dataset,
    pub f: FiniteSumObjective,
    /// the `l1` term
    pub psi: ProxTerm,
    pub constraints: Option<(Array2<f64>, Array1<f64>)>,
}

impl Instance {
    pub fn dim(&self) -> usize {
        self.f.dim()
    }
}

pub fn build_problem(spec: &ProblemSpec, stream: &RngStream) -> Result<Instance> {
    let data = match &spec.data {
        DataSource::Synthetic { n, d, sorted } => synthetic_classification(*n, *d, *sorted, &stream.child("data")),
        DataSource::GaussianSystem { d } => {
            let (w, b, _) = gaussian_system(*d, &stream.child("data"));
            Dataset::from_dense(&w, b.to_vec())?
        }
        DataSource::Libsvm { path } => {
            let bytes =
                std::fs::read(path).map_err(|e| OptError::Config(format!("cannot read dataset {path}: {e}")))?;
            parse_libsvm(&bytes)?
        }
    };
    let f = match spec.loss {
        Loss::Logistic => make_logistic(&data, spec.l2)?,
        Loss::LeastSquares => make_least_squares(data.to_dense(), Array1::from(data.labels.clone()), spec.l2)?,
    };
    let psi = if spec.l1 > 0.0 {
        ProxTerm::l1(spec.l1)?
    } else {
        ProxTerm::zero()
    };
    let constraints = spec
        .constraints
        .as_ref()
        .map(|c| random_constraints(c, f.dim(), &stream.child("constraints")));
    Ok(Instance {
        data,
        f,
        psi,
        constraints,
    })
}

/// `A ∝ G_1 G_2` with Gaussian factors of inner size `rank`, scaled to
/// `‖A‖ = 1`, and `b = A x̂` for a Gaussian `x̂` so the system is consistent.
pub fn random_constraints(spec: &ConstraintSpec, d: usize, stream: &RngStream) -> (Array2<f64>, Array1<f64>) {
    let full = spec.rows.min(d);
    let rank = spec.rank.unwrap_or(full).min(full);
    let a = if rank == full {
        gaussian_matrix(spec.rows, d, stream)
    } else {
        gaussian_matrix(spec.rows, rank, &stream.child("left")).dot(&gaussian_matrix(rank, d, &stream.child("right")))
    };
    let a = &a / linalg::spectral_norm_dense(&a);
    let b = a.dot(&gaussian_vector(d, &stream.child("x")));
    (a, b)
}

/// The indicator of `{x : A x = b}` written with an orthonormal basis of
/// the row space, together with the minimum-norm solution.
pub fn affine_set(a: &Array2<f64>, b: &Array1<f64>) -> Result<(ProxTerm, Array1<f64>)> {
    let q = linalg::range_basis(&a.t().to_owned());
    if q.ncols() == 0 {
        return Err(OptError::RankDeficient("constraint matrix is zero".into()));
    }
    // A Q has orthogonal columns, so the least-squares coefficients decouple
    let aq = a.dot(&q);
    let c = Array1::from_shape_fn(q.ncols(), |k| {
        let col = aq.column(k);
        col.dot(b) / col.dot(&col)
    });
    let x_min = q.dot(&c);
    let residual = linalg::norm(&(a.dot(&x_min) - b));
    if residual > 1e-8 * (1.0 + linalg::norm(b)) {
        return Err(OptError::Domain(format!(
            "inconsistent constraints, residual {residual:e}"
        )));
    }
    Ok((ProxTerm::linear_comp(q, Phi::Point(c))?, x_min))
}

fn reference(f: &FiniteSumObjective, psi: &ProxTerm, tol: f64) -> Result<Reference> {
    let (x, f) = reference_solution(f, psi, tol)?;
    Ok(Reference { x, f })
}

/// Builds, solves and runs `cfg`. The trace metadata carries the config
/// hash, the solver family and the reference objective value.
pub fn run(cfg: &RunConfig) -> Result<MetricTrace> {
    cfg.validate()?;
    let root = RngStream::new(cfg.seed);
    let inst = build_problem(&cfg.problem, &root.child("problem"))?;
    let solver = root.child("solver");
    let mut trace = dispatch(cfg, &inst, &root, &solver)?;
    trace.metadata.insert("config_hash".into(), cfg.hash());
    trace.metadata.insert("family".into(), cfg.solver.family().into());
    Ok(trace)
}

fn dispatch(cfg: &RunConfig, inst: &Instance, root: &RngStream, solver: &RngStream) -> Result<MetricTrace> {
    let x0 = Array1::zeros(inst.dim());
    let tol = cfg.reference_tol;
    let budget = cfg.budget;
    let (f, psi) = (&inst.f, &inst.psi);
    match &cfg.solver {
        SolverSpec::Shuffle {
            ordering,
            prox,
            stepsize,
        } => {
            let r = reference(f, psi, tol)?;
            stepsize.validate()?;
            let kind = match ordering {
                ShuffleOrdering::Rr => OrderingKind::Rr,
                ShuffleOrdering::So => OrderingKind::So,
                ShuffleOrdering::Ig => OrderingKind::Ig,
                ShuffleOrdering::Sgd => return Ok(run_sgd(f, psi, stepsize, budget, &x0, solver, Some(&r))),
            };
            let mut sched = PermutationSchedule::new(kind, f.n(), solver);
            Ok(match (psi.is_zero(), prox) {
                (true, _) => run_shuffled(f, &mut sched, stepsize, budget, &x0, Some(&r)),
                (false, ProxPlacement::EndOfEpoch) => run_prox_rr(f, psi, &mut sched, stepsize, budget, &x0, Some(&r)),
                (false, ProxPlacement::PerIteration) => {
                    run_prox_per_iteration(f, psi, &mut sched, stepsize, budget, &x0, Some(&r))
                }
            })
        }
        SolverSpec::Federated {
            workers,
            partition: mode,
            method,
        } => {
            let fp = partition(f, *workers, *mode, &root.child("partition"))?.with_reg(psi.clone());
            match method {
                FedMethod::LocalSgd {
                    gamma,
                    sync,
                    batch,
                    record_every,
                } => {
                    let r = reference(&fp.global, psi, tol)?;
                    let opts = local_opts(*gamma, budget, *batch, *record_every);
                    local_sgd(&fp, sync, &opts, solver, Some(&r))
                }
                FedMethod::MinibatchSgd {
                    gamma,
                    batch,
                    record_every,
                } => {
                    let r = reference(&fp.global, psi, tol)?;
                    let opts = local_opts(*gamma, budget, *batch, *record_every);
                    minibatch_sgd(&fp, &opts, solver, Some(&r))
                }
                FedMethod::FedRr { gamma, ordering } => {
                    let r = reference(&fp.full, psi, tol)?;
                    fed_rr(&fp, *gamma, budget, *ordering, solver, &x0, Some(&r))
                }
            }
        }
        SolverSpec::Adaptive { method, gamma0 } => {
            let r = reference(f, psi, tol)?;
            match method {
                AdaptiveMethod::Adgd { rule } => run_adgd(f, *rule, &x0, *gamma0, budget, Some(&r)),
                AdaptiveMethod::AdgdAccel => run_adgd_accel(f, &x0, *gamma0, budget, Some(&r)),
                AdaptiveMethod::Adsgd { alpha, option, batch } => {
                    run_adsgd(f, *alpha, *option, *batch, &x0, *gamma0, budget, solver, Some(&r))
                }
            }
        }
        SolverSpec::Diana {
            workers,
            partition: mode,
            method,
        } => {
            let fp = partition(f, *workers, *mode, &root.child("partition"))?;
            let r = reference(&fp.global, psi, tol)?;
            run_compressed(&fp, psi, method, budget, solver, &r)
        }
        SolverSpec::Sdm { method } => {
            let (a, b) = inst.constraints.as_ref().expect("validated");
            let (set, x_min) = affine_set(a, b)?;
            match method {
                SdmMethod::Full(p) | SdmMethod::Linear(p) => {
                    let r = reference(f, &set, tol)?;
                    let opts = SdmOptions {
                        estimator: p.estimator,
                        batch: p.batch,
                        stepsize: p.stepsize,
                        probs: p.probs.clone(),
                        order: p.order,
                        steps: budget,
                    };
                    if matches!(method, SdmMethod::Full(_)) {
                        sdm_run(f, psi, &hyperplanes(a, b)?, &opts, &x0, solver, Some(&r))
                    } else {
                        sdm_linear_run(f, psi, a, b, &opts, &x0, solver, Some(&r))
                    }
                }
                SdmMethod::Kaczmarz { order } | SdmMethod::KaczmarzMode { order } => {
                    // both start at 0 and converge to the minimum-norm solution
                    let r = Reference { x: x_min, f: 0.0 };
                    if matches!(method, SdmMethod::Kaczmarz { .. }) {
                        randomized_kaczmarz(a, b, &x0, budget, *order, solver, Some(&r))
                    } else {
                        sdm_kaczmarz_mode(a, b, &x0, budget, *order, solver, Some(&r))
                    }
                }
            }
        }
        SolverSpec::Splitting { method } => run_splitting(cfg, inst, method, &x0, root, solver),
    }
}

fn local_opts(gamma: f64, steps: usize, batch: usize, record_every: usize) -> LocalSgdOptions {
    LocalSgdOptions {
        gamma,
        steps,
        batch,
        record_every,
    }
}

fn run_compressed(
    fp: &FederatedProblem,
    psi: &ProxTerm,
    method: &CompressedMethod,
    rounds: usize,
    stream: &RngStream,
    r: &Reference,
) -> Result<MetricTrace> {
    let d = fp.global.dim();
    let blocks_of = |q: &QuantizerSpec| match &q.blocks {
        Some(sizes) => BlockSpec::new(sizes.clone()),
        None => Ok(BlockSpec::single(d)),
    };
    match method {
        CompressedMethod::Diana {
            quantizer,
            alpha,
            gamma,
            beta,
            batch,
        } => {
            let l = fp.max_smoothness();
            let (quantizer, alpha, gamma) = match quantizer {
                Some(q) => {
                    let blocks = blocks_of(q)?;
                    let mu = fp.global.strong_convexity() + psi.mu();
                    let (a0, _, g0) = diana_default_params(l, mu, fp.workers(), q.p, &blocks)?;
                    let gamma = gamma.unwrap_or(StepsizeSchedule::Constant { gamma: g0 });
                    (Some((q.p, blocks)), alpha.unwrap_or(a0), gamma)
                }
                None => (
                    None,
                    alpha.unwrap_or(1.0),
                    gamma.unwrap_or(StepsizeSchedule::Constant { gamma: 1.0 / l }),
                ),
            };
            let opts = DianaOptions {
                quantizer,
                alpha,
                gamma,
                beta: *beta,
                rounds,
                batch: *batch,
            };
            diana_run(fp, psi, &opts, stream, Some(r))
        }
        CompressedMethod::Terngrad {
            quantizer,
            gamma,
            batch,
        } => {
            let blocks = blocks_of(quantizer)?;
            terngrad_run(fp, psi, quantizer.p, &blocks, gamma, rounds, *batch, stream, Some(r))
        }
    }
}

/// `(ψ, H, L)` for the primal-dual solvers: affine constraints when
/// present, otherwise total variation through first differences.
fn pd_terms(inst: &Instance, tv: f64) -> Result<(ProxTerm, LinOp)> {
    let d = inst.dim();
    Ok(match &inst.constraints {
        Some((a, b)) => (ProxTerm::point(b.clone()), LinOp::Dense(a.clone())),
        None if tv > 0.0 => (ProxTerm::l1(tv)?, LinOp::Difference(d)),
        None => (ProxTerm::zero(), LinOp::Zero { rows: d, cols: d }),
    })
}

fn pd_opts(p: &PdParams, steps: usize) -> PdOptions {
    PdOptions {
        gamma: p.gamma,
        tau: p.tau,
        estimator: p.estimator,
        batch: p.batch,
        steps,
        init: p.init,
    }
}

fn run_splitting(
    cfg: &RunConfig,
    inst: &Instance,
    method: &SplittingMethod,
    x0: &Array1<f64>,
    root: &RngStream,
    stream: &RngStream,
) -> Result<MetricTrace> {
    let (f, psi) = (&inst.f, &inst.psi);
    let tol = cfg.reference_tol;
    let budget = cfg.budget;
    let tv = cfg.problem.tv;
    // f + ψ + H(L·) written as one prox term for the reference solver
    let composite_ref = || -> Result<Reference> {
        match &inst.constraints {
            Some((a, b)) => reference(f, &affine_set(a, b)?.0, tol),
            None => reference(f, &ProxTerm::fused_lasso(cfg.problem.l1, tv)?, tol),
        }
    };
    match method {
        SplittingMethod::Pddy(_) | SplittingMethod::Pd3o(_) | SplittingMethod::CondatVu { .. } => {
            let r = composite_ref()?;
            let (h, l) = pd_terms(inst, tv)?;
            let prob = PdProblem { f, psi, h: &h, l: &l };
            match method {
                SplittingMethod::Pddy(p) => pddy_run(&prob, &pd_opts(p, budget), x0, stream, Some(&r)),
                SplittingMethod::Pd3o(p) => pd3o_run(&prob, &pd_opts(p, budget), x0, stream, Some(&r)),
                SplittingMethod::CondatVu { tau, gamma, form } => {
                    condat_vu_run(&prob, *tau, *gamma, budget, *form, x0, Some(&r))
                }
                _ => unreachable!(),
            }
        }
        SplittingMethod::Licosgd(p) => {
            let (a, b) = inst.constraints.as_ref().expect("validated");
            let r = composite_ref()?;
            licosgd_run(
                f,
                &LinOp::Dense(a.clone()),
                b,
                &pd_opts(p, budget),
                x0,
                None,
                stream,
                Some(&r),
            )
        }
        SplittingMethod::Prilicosgd(p) => {
            let (a, b) = inst.constraints.as_ref().expect("validated");
            let r = composite_ref()?;
            let w = LinOp::Dense(a.t().dot(a));
            let c = a.t().dot(b);
            prilicosgd_run(f, &w, &c, &pd_opts(p, budget), x0, None, stream, Some(&r))
        }
        SplittingMethod::Destroy { params, nodes, edges } => {
            let fp = partition(f, *nodes, PartitionMode::Shuffled, &root.child("partition"))?;
            // Σ_i f_i = N · global
            let (x, _) = reference_solution(&fp.global, &ProxTerm::zero(), tol)?;
            let fstar = fp.shards.iter().map(|s| s.value(&x)).sum();
            let r = Reference { x, f: fstar };
            destroy_run(&fp.shards, edges, &pd_opts(params, budget), x0, stream, Some(&r))
        }
    }
}
