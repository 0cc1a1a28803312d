//! Simulated multi-worker methods: Local SGD, minibatch SGD and Federated
//! Random Reshuffling, plus heterogeneity diagnostics.

use ndarray::Array1;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{OptError, Result};
use crate::harness::trace::{MetricTrace, Recorder, Reference};
use crate::linalg;
use crate::problems::{Dataset, FiniteSumObjective};
use crate::prox::ProxTerm;
use crate::rng::{Rng, RngStream};
use crate::shuffle::{epoch_pass, OrderingKind, PermutationSchedule};

/// Bits per communicated float.
pub const FLOAT_BITS: f64 = 64.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PartitionMode {
    /// index-order shards; heterogeneous on sorted data
    Contiguous,
    /// random permutation, then contiguous
    Shuffled,
    /// every worker holds everything
    Replicate,
}

#[derive(Clone, Debug)]
pub struct FederatedProblem {
    pub shards: Vec<FiniteSumObjective>,
    /// `(1/M) Σ_m f_m`
    pub global: FiniteSumObjective,
    /// The undivided objective `(1/N) Σ_i f_i`; equals `global` whenever
    /// the shards have equal sizes.
    pub full: FiniteSumObjective,
    pub reg: ProxTerm,
    pub mode: PartitionMode,
}

impl FederatedProblem {
    pub fn workers(&self) -> usize {
        self.shards.len()
    }

    pub fn dim(&self) -> usize {
        self.full.dim()
    }

    /// Total number of stored samples `N = Σ N_m`.
    pub fn total_samples(&self) -> usize {
        self.shards.iter().map(|s| s.n()).sum()
    }

    pub fn with_reg(mut self, reg: ProxTerm) -> Self {
        self.reg = reg;
        self
    }

    pub fn max_smoothness(&self) -> f64 {
        self.shards.iter().map(|s| s.max_smoothness()).fold(0.0, f64::max)
    }
}

/// Splits the components of `f` over `m` workers.
pub fn partition(
    f: &FiniteSumObjective,
    m: usize,
    mode: PartitionMode,
    stream: &RngStream,
) -> Result<FederatedProblem> {
    let n = f.n();
    if m == 0 || m > n {
        return Err(OptError::InvalidParameter(format!(
            "cannot split {n} samples over {m} workers"
        )));
    }
    let mut order: Vec<usize> = (0..n).collect();
    if mode == PartitionMode::Shuffled {
        use rand::seq::SliceRandom;
        order.shuffle(&mut stream.rng());
    }
    let shards: Vec<FiniteSumObjective> = match mode {
        PartitionMode::Replicate => (0..m).map(|_| f.clone()).collect(),
        _ => {
            let (q, r) = (n / m, n % m);
            let mut start = 0;
            (0..m)
                .map(|k| {
                    let len = q + usize::from(k < r);
                    let s = f.subset(&order[start..start + len]);
                    start += len;
                    s
                })
                .collect()
        }
    };
    let global = if mode == PartitionMode::Replicate || n % m == 0 {
        if mode == PartitionMode::Shuffled {
            f.subset(&order)
        } else {
            f.clone()
        }
    } else {
        let total = n as f64;
        let mut map = Vec::with_capacity(n);
        for s in &shards {
            let w = total / (m as f64 * s.n() as f64);
            map.extend(s.map().iter().map(|&(j, wj)| (j, wj * w)));
        }
        f.reweighted(map, f.scale())
    };
    Ok(FederatedProblem {
        shards,
        global,
        full: f.clone(),
        reg: ProxTerm::zero(),
        mode,
    })
}

/// [`partition`] for a dataset with a given objective builder.
pub fn partition_dataset<B>(
    ds: &Dataset,
    m: usize,
    mode: PartitionMode,
    stream: &RngStream,
    build: B,
) -> Result<FederatedProblem>
where
    B: Fn(&Dataset) -> Result<FiniteSumObjective>,
{
    if m > ds.n_samples() {
        return Err(OptError::InvalidParameter(format!(
            "cannot split {} samples over {m} workers",
            ds.n_samples()
        )));
    }
    partition(&build(ds)?, m, mode, stream)
}

/// When local iterates are averaged.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SyncSchedule {
    /// every `h` steps
    Every { h: usize },
    /// after the listed step counts (strictly increasing)
    At { steps: Vec<usize> },
}

impl SyncSchedule {
    pub fn validate(&self) -> Result<()> {
        match self {
            SyncSchedule::Every { h: 0 } => Err(OptError::InvalidParameter("H = 0".into())),
            SyncSchedule::At { steps } if steps.windows(2).any(|w| w[0] >= w[1]) || steps.first() == Some(&0) => Err(
                OptError::InvalidParameter("sync steps must be positive and strictly increasing".into()),
            ),
            _ => Ok(()),
        }
    }

    /// Whether to average after `t` completed local steps.
    pub fn syncs_after(&self, t: usize) -> bool {
        match self {
            SyncSchedule::Every { h } => t % h == 0,
            SyncSchedule::At { steps } => steps.binary_search(&t).is_ok(),
        }
    }
}

pub fn worker_stream(stream: &RngStream, m: usize) -> RngStream {
    stream.child(&format!("worker{m}"))
}

/// Mean of vectors in index order.
pub fn average(xs: &[Array1<f64>]) -> Array1<f64> {
    let mut s = Array1::zeros(xs[0].len());
    for x in xs {
        s += x;
    }
    s / xs.len() as f64
}

/// `(1/M) Σ |x_m - x̂|^2`
pub fn deviation(xs: &[Array1<f64>], mean: &Array1<f64>) -> f64 {
    xs.iter().map(|x| linalg::dist_sq(x, mean)).sum::<f64>() / xs.len() as f64
}

/// Mean of `batch` component gradients drawn uniformly with replacement.
pub fn sampled_grad(f: &FiniteSumObjective, x: &Array1<f64>, batch: usize, rng: &mut Rng) -> Array1<f64> {
    let n = f.n();
    let mut g = f.sample_grad(rng.random_range(0..n), x);
    for _ in 1..batch {
        g += &f.sample_grad(rng.random_range(0..n), x);
    }
    if batch > 1 {
        g /= batch as f64;
    }
    g
}

#[derive(Clone, Debug, PartialEq)]
pub struct LocalSgdOptions {
    pub gamma: f64,
    pub steps: usize,
    pub batch: usize,
    /// record a row every this many steps (and at the end)
    pub record_every: usize,
}

impl LocalSgdOptions {
    fn validate(&self) -> Result<()> {
        if !(self.gamma > 0.0) || self.batch == 0 || self.record_every == 0 {
            return Err(OptError::InvalidParameter(format!("{self:?}")));
        }
        Ok(())
    }
}

/// Local SGD: independent local steps, averaged at sync points. The `aux`
/// series `deviation` holds `V^k` for every recorded row.
pub fn local_sgd(
    fp: &FederatedProblem,
    sync: &SyncSchedule,
    opts: &LocalSgdOptions,
    stream: &RngStream,
    reference: Option<&Reference>,
) -> Result<MetricTrace> {
    opts.validate()?;
    sync.validate()?;
    let m = fp.workers();
    let d = fp.dim() as f64;
    let mut rngs: Vec<Rng> = (0..m).map(|k| worker_stream(stream, k).rng()).collect();
    let global = &fp.global;
    let mut rec = Recorder::new(|x| global.value(x), reference);
    let mut xs = vec![Array1::<f64>::zeros(fp.dim()); m];
    let mut mean = average(&xs);
    rec.record(0, &mean);
    rec.trace.push_aux("deviation", 0.0);
    for t in 1..=opts.steps {
        for (k, x) in xs.iter_mut().enumerate() {
            let g = sampled_grad(&fp.shards[k], x, opts.batch, &mut rngs[k]);
            x.scaled_add(-opts.gamma, &g);
        }
        rec.counters.grads += (m * opts.batch) as u64;
        let synced = sync.syncs_after(t);
        if synced {
            mean = average(&xs);
            for x in xs.iter_mut() {
                x.assign(&mean);
            }
            rec.counters.bits += 2.0 * m as f64 * d * FLOAT_BITS;
        }
        if t % opts.record_every == 0 || t == opts.steps {
            if !synced {
                mean = average(&xs);
            }
            rec.record(t as u64, &mean);
            let v = if synced { 0.0 } else { deviation(&xs, &mean) };
            rec.trace.push_aux("deviation", v);
        }
    }
    Ok(rec.finish(mean))
}

/// Minibatch SGD where worker `m` contributes one local step from the
/// shared point: `x⁺ = (1/M) Σ_m (x - γ g_m)`.
pub fn minibatch_sgd(
    fp: &FederatedProblem,
    opts: &LocalSgdOptions,
    stream: &RngStream,
    reference: Option<&Reference>,
) -> Result<MetricTrace> {
    opts.validate()?;
    let m = fp.workers();
    let d = fp.dim() as f64;
    let mut rngs: Vec<Rng> = (0..m).map(|k| worker_stream(stream, k).rng()).collect();
    let global = &fp.global;
    let mut rec = Recorder::new(|x| global.value(x), reference);
    let mut x = Array1::<f64>::zeros(fp.dim());
    rec.record(0, &x);
    rec.trace.push_aux("deviation", 0.0);
    for t in 1..=opts.steps {
        let locals: Vec<Array1<f64>> = (0..m)
            .map(|k| {
                let g = sampled_grad(&fp.shards[k], &x, opts.batch, &mut rngs[k]);
                let mut y = x.clone();
                y.scaled_add(-opts.gamma, &g);
                y
            })
            .collect();
        x = average(&locals);
        rec.counters.grads += (m * opts.batch) as u64;
        rec.counters.bits += 2.0 * m as f64 * d * FLOAT_BITS;
        if t % opts.record_every == 0 || t == opts.steps {
            rec.record(t as u64, &x);
            rec.trace.push_aux("deviation", 0.0);
        }
    }
    Ok(rec.finish(x))
}

/// Federated Random Reshuffling: each worker makes one RR/SO pass over its
/// shard, the server averages and applies `prox_{γ (N/M) R}`.
pub fn fed_rr(
    fp: &FederatedProblem,
    gamma: f64,
    epochs: usize,
    variant: OrderingKind,
    stream: &RngStream,
    x0: &Array1<f64>,
    reference: Option<&Reference>,
) -> Result<MetricTrace> {
    if !(gamma > 0.0) {
        return Err(OptError::InvalidParameter(format!("gamma = {gamma}")));
    }
    if variant == OrderingKind::Ig {
        return Err(OptError::InvalidParameter("fed_rr supports rr and so orderings".into()));
    }
    let m = fp.workers();
    let d = fp.dim() as f64;
    let full = &fp.full;
    let reg = &fp.reg;
    let mut rec = Recorder::new(|x| full.value(x) + reg.value(x), reference);
    let lmax = fp.max_smoothness();
    if gamma > 1.0 / lmax {
        rec.warn(format!("gamma = {gamma} exceeds 1/max L_i = {}", 1.0 / lmax));
    }
    let mut scheds: Vec<PermutationSchedule> = (0..m)
        .map(|k| PermutationSchedule::new(variant, fp.shards[k].n(), &worker_stream(stream, k)))
        .collect();
    let prox_param = gamma * fp.total_samples() as f64 / m as f64;
    let mut x = x0.clone();
    rec.record(0, &x);
    rec.trace.push_aux("deviation", 0.0);
    for e in 0..epochs {
        let locals: Vec<Array1<f64>> = (0..m)
            .map(|k| {
                let ord = scheds[k].next_ordering();
                epoch_pass(&fp.shards[k], &x, gamma, &ord)
            })
            .collect();
        let mean = average(&locals);
        let v = deviation(&locals, &mean);
        rec.counters.grads += fp.total_samples() as u64;
        rec.counters.bits += 2.0 * m as f64 * d * FLOAT_BITS;
        x = if fp.reg.is_zero() {
            mean
        } else {
            rec.counters.proxes += 1;
            fp.reg.prox(prox_param, &mean)
        };
        rec.record(e as u64 + 1, &x);
        rec.trace.push_aux("deviation", v);
    }
    Ok(rec.finish(x))
}

#[derive(Clone, Debug, PartialEq)]
pub struct FedVariances {
    /// `E|g(x*)|^2` for a size-`b` minibatch drawn from all components
    pub sigma_opt: f64,
    /// `(1/M) Σ_m E|g_m(x*)|^2` for size-`b` minibatches drawn per shard
    pub sigma_dif: f64,
    /// variance of the local gradients around the shard gradient
    pub sigma_m: Vec<f64>,
}

/// Exact second moments of with-replacement minibatch gradients at `x*`:
/// `E|ḡ|^2 = |∇f(x*)|^2 + σ²/b`. With `b = 1` and equal shards the two
/// aggregate quantities coincide.
pub fn fed_variances(fp: &FederatedProblem, x_star: &Array1<f64>, batch: usize) -> FedVariances {
    assert!(batch >= 1, "batch must be positive");
    let b = batch as f64;
    let second_moment = |f: &FiniteSumObjective| {
        let g = f.grad(x_star);
        linalg::norm_sq(&g) + f.sigma_star(x_star) / b
    };
    let sigma_opt = second_moment(&fp.full);
    let sigma_dif = fp.shards.iter().map(second_moment).sum::<f64>() / fp.workers() as f64;
    let sigma_m = fp.shards.iter().map(|s| s.sigma_star(x_star)).collect();
    FedVariances {
        sigma_opt,
        sigma_dif,
        sigma_m,
    }
}
