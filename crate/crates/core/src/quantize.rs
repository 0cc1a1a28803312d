//! Randomized p-quantization, its moments, and the DIANA / TernGrad family.

use ndarray::{s, Array1};
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{OptError, Result};
use crate::federated::{average, sampled_grad, worker_stream, FederatedProblem};
use crate::harness::trace::{MetricTrace, Recorder, Reference};
use crate::linalg;
use crate::prox::ProxTerm;
use crate::rng::{Rng, RngStream};
use crate::shuffle::StepsizeSchedule;

/// Bits for one transmitted float (norms and dense messages).
pub const FLOAT_BITS: f64 = 32.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum PNorm {
    #[serde(rename = "1")]
    One,
    #[serde(rename = "2")]
    Two,
    #[serde(rename = "inf")]
    Inf,
}

impl PNorm {
    pub fn from_f64(p: f64) -> Result<Self> {
        match p {
            1.0 => Ok(PNorm::One),
            2.0 => Ok(PNorm::Two),
            _ if p == f64::INFINITY => Ok(PNorm::Inf),
            _ => Err(OptError::InvalidParameter(format!(
                "p = {p} is not supported; use 1, 2 or inf"
            ))),
        }
    }

    pub fn norm(&self, x: &[f64]) -> f64 {
        match self {
            PNorm::One => x.iter().map(|v| v.abs()).sum(),
            PNorm::Two => x.iter().map(|v| v * v).sum::<f64>().sqrt(),
            PNorm::Inf => x.iter().fold(0.0, |m, v| m.max(v.abs())),
        }
    }
}

/// Consecutive block sizes covering `0..d`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlockSpec {
    sizes: Vec<usize>,
}

impl BlockSpec {
    pub fn new(sizes: Vec<usize>) -> Result<Self> {
        if sizes.is_empty() || sizes.contains(&0) {
            return Err(OptError::InvalidParameter(format!("bad block sizes {sizes:?}")));
        }
        Ok(BlockSpec { sizes })
    }

    pub fn single(d: usize) -> Self {
        BlockSpec { sizes: vec![d.max(1)] }
    }

    pub fn per_coordinate(d: usize) -> Self {
        BlockSpec {
            sizes: vec![1; d.max(1)],
        }
    }

    /// Blocks of `size`, the last one possibly shorter.
    pub fn uniform(d: usize, size: usize) -> Result<Self> {
        if size == 0 || d == 0 {
            return Err(OptError::InvalidParameter("zero block size or dimension".into()));
        }
        let mut v = vec![size; d / size];
        if d % size != 0 {
            v.push(d % size);
        }
        Ok(BlockSpec { sizes: v })
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn dim(&self) -> usize {
        self.sizes.iter().sum()
    }

    pub fn max_block(&self) -> usize {
        self.sizes.iter().copied().max().unwrap_or(0)
    }

    fn check(&self, d: usize) -> Result<()> {
        if self.dim() != d {
            return Err(OptError::Dimension(format!(
                "blocks cover {} coordinates, vector has {d}",
                self.dim()
            )));
        }
        Ok(())
    }

    fn ranges(&self) -> impl Iterator<Item = std::ops::Range<usize>> + '_ {
        self.sizes.iter().scan(0, |start, &len| {
            let r = *start..*start + len;
            *start += len;
            Some(r)
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct QuantBlock {
    pub norm: f64,
    pub payload: Vec<i8>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct QuantizedMessage {
    pub p: PNorm,
    pub blocks: Vec<QuantBlock>,
    /// estimated encoded size
    pub bits: f64,
}

impl QuantizedMessage {
    pub fn decode(&self) -> Array1<f64> {
        self.blocks
            .iter()
            .flat_map(|b| b.payload.iter().map(move |&t| b.norm * t as f64))
            .collect()
    }

    pub fn nnz(&self) -> usize {
        self.blocks
            .iter()
            .map(|b| b.payload.iter().filter(|&&t| t != 0).count())
            .sum()
    }

    /// Per block: little-endian `f64` norm, then 2 bits per coordinate
    /// (`00` zero, `01` plus, `10` minus), coordinate `j` in bits
    /// `2(j mod 4)..2(j mod 4)+2` of its byte, padded per block.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        for b in &self.blocks {
            out.extend_from_slice(&b.norm.to_le_bytes());
            for chunk in b.payload.chunks(4) {
                let mut byte = 0u8;
                for (j, &t) in chunk.iter().enumerate() {
                    let code = match t {
                        1 => 0b01,
                        -1 => 0b10,
                        _ => 0b00,
                    };
                    byte |= code << (2 * j);
                }
                out.push(byte);
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8], blocks: &BlockSpec, p: PNorm) -> Result<Self> {
        let mut pos = 0;
        let mut out = Vec::new();
        let short = || OptError::Parse {
            line: 0,
            msg: "truncated message".into(),
        };
        for &len in blocks.sizes() {
            let nb: [u8; 8] = bytes.get(pos..pos + 8).ok_or_else(short)?.try_into().unwrap();
            pos += 8;
            let norm = f64::from_le_bytes(nb);
            let nbytes = len.div_ceil(4);
            let body = bytes.get(pos..pos + nbytes).ok_or_else(short)?;
            pos += nbytes;
            let mut payload = Vec::with_capacity(len);
            for j in 0..len {
                let code = (body[j / 4] >> (2 * (j % 4))) & 0b11;
                payload.push(match code {
                    0b00 => 0,
                    0b01 => 1,
                    0b10 => -1,
                    _ => {
                        return Err(OptError::Parse {
                            line: 0,
                            msg: "invalid ternary code".into(),
                        })
                    }
                });
            }
            out.push(QuantBlock { norm, payload });
        }
        if pos != bytes.len() {
            return Err(OptError::Parse {
                line: 0,
                msg: "trailing bytes".into(),
            });
        }
        let bits = out
            .iter()
            .map(|b| block_bits(b.payload.iter().filter(|&&t| t != 0).count()))
            .sum();
        Ok(QuantizedMessage { p, blocks: out, bits })
    }
}

/// Encoded size of one block with `nnz` nonzeros:
/// `sqrt(nnz) (log2 nnz + log2 2 + 1) + 32`.
pub fn block_bits(nnz: usize) -> f64 {
    if nnz == 0 {
        return FLOAT_BITS;
    }
    let s = nnz as f64;
    s.sqrt() * (s.log2() + 2.0) + FLOAT_BITS
}

/// Quantizes one block, drawing one uniform per coordinate in order.
fn quant_one(x: &[f64], p: PNorm, rng: &mut Rng) -> QuantBlock {
    let norm = p.norm(x);
    let payload = x
        .iter()
        .map(|&v| {
            let u: f64 = rng.random();
            if norm > 0.0 && u < v.abs() / norm {
                if v > 0.0 {
                    1
                } else {
                    -1
                }
            } else {
                0
            }
        })
        .collect();
    QuantBlock { norm, payload }
}

pub fn quant_p(delta: &Array1<f64>, p: PNorm, rng: &mut Rng) -> Result<QuantizedMessage> {
    quant_block(delta, p, &BlockSpec::single(delta.len()), rng)
}

/// Block p-quantization: every block is quantized independently with its
/// own norm.
pub fn quant_block(delta: &Array1<f64>, p: PNorm, blocks: &BlockSpec, rng: &mut Rng) -> Result<QuantizedMessage> {
    if delta.iter().any(|v| !v.is_finite()) {
        return Err(OptError::Numerical("quantizing a non-finite vector".into()));
    }
    if delta.is_empty() {
        return Ok(QuantizedMessage {
            p,
            blocks: Vec::new(),
            bits: 0.0,
        });
    }
    blocks.check(delta.len())?;
    let x = delta.as_slice().expect("contiguous");
    let qb: Vec<QuantBlock> = blocks.ranges().map(|r| quant_one(&x[r], p, rng)).collect();
    let bits = qb
        .iter()
        .map(|b| block_bits(b.payload.iter().filter(|&&t| t != 0).count()))
        .sum();
    Ok(QuantizedMessage { p, blocks: qb, bits })
}

/// `E|Δ̂ - Δ|^2 = Σ_l |Δ(l)|_1 |Δ(l)|_p - |Δ(l)|^2`.
pub fn psi(delta: &Array1<f64>, p: PNorm, blocks: &BlockSpec) -> Result<f64> {
    blocks.check(delta.len())?;
    let x = delta.as_slice().expect("contiguous");
    Ok(blocks
        .ranges()
        .map(|r| {
            let b = &x[r];
            (PNorm::One.norm(b) * p.norm(b) - b.iter().map(|v| v * v).sum::<f64>()).max(0.0)
        })
        .sum())
}

/// `inf_x |x|^2 / (|x|_1 |x|_p)` over `R^d \ {0}`.
pub fn alpha_p(p: PNorm, d: usize) -> f64 {
    assert!(d >= 1, "alpha_p needs d >= 1");
    let df = d as f64;
    match p {
        PNorm::One => 1.0 / df,
        PNorm::Two => 1.0 / df.sqrt(),
        PNorm::Inf => 2.0 / (1.0 + df.sqrt()),
    }
}

/// `E nnz = |Δ|_1 / |Δ|_p`, 0 for `Δ = 0`.
pub fn expected_nnz(delta: &Array1<f64>, p: PNorm) -> f64 {
    let x = delta.as_slice().expect("contiguous");
    let np = p.norm(x);
    if np == 0.0 {
        0.0
    } else {
        PNorm::One.norm(x) / np
    }
}

/// Step and memory parameters for the strongly convex case:
/// `α = α_p/2`, `c = 4(1-α_p)/(M α_p²)`, `γ = min{α/μ, 2/((L+μ)(1+cα))}`.
pub fn diana_default_params(l: f64, mu: f64, workers: usize, p: PNorm, blocks: &BlockSpec) -> Result<(f64, f64, f64)> {
    if !(mu > 0.0) || !(l >= mu) || workers == 0 {
        return Err(OptError::InvalidParameter(format!(
            "need 0 < mu <= L and M >= 1, got mu={mu}, L={l}, M={workers}"
        )));
    }
    let ap = alpha_p(p, blocks.max_block());
    let alpha = ap / 2.0;
    let c = 4.0 * (1.0 - ap) / (workers as f64 * ap * ap);
    let gamma = (alpha / mu).min(2.0 / ((l + mu) * (1.0 + c * alpha)));
    Ok((alpha, c, gamma))
}

/// Left side of the parameter condition `(1 + M c α²)/(1 + M c α) <= α_p`.
pub fn diana_condition(workers: usize, c: f64, alpha: f64) -> f64 {
    let mc = workers as f64 * c;
    (1.0 + mc * alpha * alpha) / (1.0 + mc * alpha)
}

#[derive(Clone, Debug, PartialEq)]
pub struct DianaOptions {
    /// `None` sends dense vectors (uncompressed baseline).
    pub quantizer: Option<(PNorm, BlockSpec)>,
    pub alpha: f64,
    pub gamma: StepsizeSchedule,
    pub beta: f64,
    pub rounds: usize,
    /// `None` for full local gradients.
    pub batch: Option<usize>,
}

impl DianaOptions {
    fn validate(&self, d: usize) -> Result<()> {
        if !(self.alpha >= 0.0) || !(0.0..1.0).contains(&self.beta) || self.batch == Some(0) {
            return Err(OptError::InvalidParameter(format!(
                "alpha = {}, beta = {}, batch = {:?}",
                self.alpha, self.beta, self.batch
            )));
        }
        if let Some((_, b)) = &self.quantizer {
            b.check(d)?;
        }
        self.gamma.validate()
    }
}

fn worker_grad(
    fp: &FederatedProblem,
    m: usize,
    x: &Array1<f64>,
    batch: Option<usize>,
    rng: &mut Rng,
) -> (Array1<f64>, usize) {
    match batch {
        None => (fp.shards[m].grad(x), fp.shards[m].n()),
        Some(b) => (sampled_grad(&fp.shards[m], x, b, rng), b),
    }
}

fn compress(delta: Array1<f64>, q: &Option<(PNorm, BlockSpec)>, rng: &mut Rng) -> Result<(Array1<f64>, f64)> {
    match q {
        None => {
            let bits = delta.len() as f64 * FLOAT_BITS;
            Ok((delta, bits))
        }
        Some((p, blocks)) => {
            let msg = quant_block(&delta, *p, blocks, rng)?;
            Ok((msg.decode(), msg.bits))
        }
    }
}

/// DIANA: workers compress `g_m - h_m`, both sides shift the memories by
/// `α Δ̂_m`, the server steps along `v = βv + h + mean Δ̂_m`. The `aux`
/// series `memory_error` holds `|h - mean h_m|` per round.
pub fn diana_run(
    fp: &FederatedProblem,
    psi: &ProxTerm,
    opts: &DianaOptions,
    stream: &RngStream,
    reference: Option<&Reference>,
) -> Result<MetricTrace> {
    let d = fp.dim();
    opts.validate(d)?;
    let m = fp.workers();
    let mut rngs: Vec<Rng> = (0..m).map(|k| worker_stream(stream, k).rng()).collect();
    let global = &fp.global;
    let mut rec = Recorder::new(|x| global.value(x) + psi.value(x), reference);
    let mut x = Array1::<f64>::zeros(d);
    let mut hs = vec![Array1::<f64>::zeros(d); m];
    let mut h = Array1::<f64>::zeros(d);
    let mut v = Array1::<f64>::zeros(d);
    rec.record(0, &x);
    for k in 0..opts.rounds {
        let mut deltas = Vec::with_capacity(m);
        for w in 0..m {
            let (g, used) = worker_grad(fp, w, &x, opts.batch, &mut rngs[w]);
            rec.counters.grads += used as u64;
            let (dq, bits) = compress(&g - &hs[w], &opts.quantizer, &mut rngs[w])?;
            rec.counters.bits += bits;
            hs[w].scaled_add(opts.alpha, &dq);
            deltas.push(dq);
        }
        let dbar = average(&deltas);
        let ghat = &h + &dbar;
        h.scaled_add(opts.alpha, &dbar);
        v = &v * opts.beta + &ghat;
        let gamma = opts.gamma.gamma(k);
        let mut u = x.clone();
        u.scaled_add(-gamma, &v);
        x = if psi.is_zero() {
            u
        } else {
            rec.counters.proxes += 1;
            psi.prox(gamma, &u)
        };
        if x.iter().any(|t| !t.is_finite()) {
            return Err(OptError::Numerical(format!("iterate diverged at round {k}")));
        }
        rec.record(k as u64 + 1, &x);
        rec.trace.push_aux("memory_error", linalg::norm(&(&h - &average(&hs))));
    }
    rec.trace
        .aux
        .insert("memory".into(), hs.iter().flat_map(|hm| hm.iter().copied()).collect());
    Ok(rec.finish(x))
}

/// TernGrad (`p = ∞`) and 1-bit QSGD (`p = 2`): quantized gradients with no
/// memory and no momentum.
#[allow(clippy::too_many_arguments)]
pub fn terngrad_run(
    fp: &FederatedProblem,
    psi: &ProxTerm,
    p: PNorm,
    blocks: &BlockSpec,
    gamma: &StepsizeSchedule,
    rounds: usize,
    batch: Option<usize>,
    stream: &RngStream,
    reference: Option<&Reference>,
) -> Result<MetricTrace> {
    let d = fp.dim();
    blocks.check(d)?;
    gamma.validate()?;
    let m = fp.workers();
    let mut rngs: Vec<Rng> = (0..m).map(|k| worker_stream(stream, k).rng()).collect();
    let global = &fp.global;
    let mut rec = Recorder::new(|x| global.value(x) + psi.value(x), reference);
    let mut x = Array1::<f64>::zeros(d);
    rec.record(0, &x);
    for k in 0..rounds {
        let mut msgs = Vec::with_capacity(m);
        for w in 0..m {
            let (g, used) = worker_grad(fp, w, &x, batch, &mut rngs[w]);
            rec.counters.grads += used as u64;
            let msg = quant_block(&g, p, blocks, &mut rngs[w])?;
            rec.counters.bits += msg.bits;
            msgs.push(msg.decode());
        }
        let ghat = average(&msgs);
        let g = gamma.gamma(k);
        let mut u = x.clone();
        u.scaled_add(-g, &ghat);
        x = if psi.is_zero() {
            u
        } else {
            rec.counters.proxes += 1;
            psi.prox(g, &u)
        };
        if x.iter().any(|t| !t.is_finite()) {
            return Err(OptError::Numerical(format!("iterate diverged at round {k}")));
        }
        rec.record(k as u64 + 1, &x);
    }
    Ok(rec.finish(x))
}

/// Per-worker memories `h_m` from a finished DIANA trace.
pub fn diana_memories(trace: &MetricTrace, workers: usize) -> Option<Vec<Array1<f64>>> {
    let flat = trace.aux.get("memory")?;
    let d = flat.len() / workers;
    let a = Array1::from(flat.clone());
    Some(
        (0..workers)
            .map(|k| a.slice(s![k * d..(k + 1) * d]).to_owned())
            .collect(),
    )
}
