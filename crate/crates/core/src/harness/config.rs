//! Run configurations: a problem, a solver, a seed and a budget.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::adaptive::{AdgdRule, AdsgdOption, DEFAULT_GAMMA0};
use crate::error::{OptError, Result};
use crate::federated::{PartitionMode, SyncSchedule};
use crate::quantize::PNorm;
use crate::shuffle::{OrderingKind, StepsizeSchedule};
use crate::splitting::{CvForm, EstimatorKind, IndexOrder, PddyInit, SdmStepsize};

pub const DEFAULT_REFERENCE_TOL: f64 = 1e-10;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub problem: ProblemSpec,
    pub solver: SolverSpec,
    pub seed: u64,
    /// Epochs for the shuffling methods and FedRR, rounds for DIANA,
    /// steps for everything else.
    pub budget: usize,
    #[serde(default = "default_tol")]
    pub reference_tol: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<String>,
}

fn default_tol() -> f64 {
    DEFAULT_REFERENCE_TOL
}

fn one() -> usize {
    1
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Loss {
    Logistic,
    LeastSquares,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case", deny_unknown_fields)]
pub enum DataSource {
    /// Two Gaussian classes with labels in {0, 1}.
    Synthetic {
        n: usize,
        d: usize,
        #[serde(default)]
        sorted: bool,
    },
    /// A square nonsingular system `W x = b`; rows are samples.
    GaussianSystem {
        d: usize,
    },
    Libsvm {
        path: String,
    },
}

/// Consistent linear constraints `A x = b` with `A` of the given shape and rank.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConstraintSpec {
    pub rows: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rank: Option<usize>,
}

/// `f(x) = loss + (l2/2)|x|²`, `ψ(x) = l1 |x|_1`; `tv` weights the total
/// variation term used by the splitting solvers.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemSpec {
    pub loss: Loss,
    pub data: DataSource,
    #[serde(default)]
    pub l2: f64,
    #[serde(default)]
    pub l1: f64,
    #[serde(default)]
    pub tv: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub constraints: Option<ConstraintSpec>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum SolverSpec {
    Shuffle {
        ordering: ShuffleOrdering,
        #[serde(default)]
        prox: ProxPlacement,
        stepsize: StepsizeSchedule,
    },
    Federated {
        workers: usize,
        partition: PartitionMode,
        method: FedMethod,
    },
    Adaptive {
        method: AdaptiveMethod,
        #[serde(default = "default_gamma0")]
        gamma0: f64,
    },
    Diana {
        workers: usize,
        partition: PartitionMode,
        method: CompressedMethod,
    },
    Sdm {
        method: SdmMethod,
    },
    Splitting {
        method: SplittingMethod,
    },
}

fn default_gamma0() -> f64 {
    DEFAULT_GAMMA0
}

impl SolverSpec {
    /// The CLI subcommand that runs this solver.
    pub fn family(&self) -> &'static str {
        match self {
            SolverSpec::Shuffle { .. } => "shuffle",
            SolverSpec::Federated { .. } => "federated",
            SolverSpec::Adaptive { .. } => "adaptive",
            SolverSpec::Diana { .. } => "diana",
            SolverSpec::Sdm { .. } => "sdm",
            SolverSpec::Splitting { .. } => "splitting",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShuffleOrdering {
    Rr,
    So,
    Ig,
    /// with-replacement sampling
    Sgd,
}

/// Where a nonzero `ψ` is applied by the shuffling methods.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProxPlacement {
    #[default]
    EndOfEpoch,
    PerIteration,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum FedMethod {
    LocalSgd {
        gamma: f64,
        sync: SyncSchedule,
        #[serde(default = "one")]
        batch: usize,
        #[serde(default = "one")]
        record_every: usize,
    },
    MinibatchSgd {
        gamma: f64,
        #[serde(default = "one")]
        batch: usize,
        #[serde(default = "one")]
        record_every: usize,
    },
    FedRr {
        gamma: f64,
        #[serde(default = "rr")]
        ordering: OrderingKind,
    },
}

fn rr() -> OrderingKind {
    OrderingKind::Rr
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum AdaptiveMethod {
    Adgd {
        #[serde(default = "standard")]
        rule: AdgdRule,
    },
    AdgdAccel,
    Adsgd {
        alpha: f64,
        option: AdsgdOption,
        #[serde(default = "one")]
        batch: usize,
    },
}

fn standard() -> AdgdRule {
    AdgdRule::Standard
}

/// A p-quantizer over the given block sizes (one block when absent).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuantizerSpec {
    pub p: PNorm,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub blocks: Option<Vec<usize>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum CompressedMethod {
    /// `alpha` and `gamma` default to the prescribed values for the
    /// quantizer; a missing quantizer sends dense vectors.
    Diana {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        quantizer: Option<QuantizerSpec>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        alpha: Option<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        gamma: Option<StepsizeSchedule>,
        #[serde(default)]
        beta: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        batch: Option<usize>,
    },
    Terngrad {
        quantizer: QuantizerSpec,
        gamma: StepsizeSchedule,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        batch: Option<usize>,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SdmParams {
    pub estimator: EstimatorKind,
    #[serde(default = "one")]
    pub batch: usize,
    pub stepsize: SdmStepsize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub probs: Option<Vec<f64>>,
    #[serde(default)]
    pub order: IndexOrder,
}

/// SDM variants; all of them read the problem's constraints.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SdmMethod {
    /// one hyperplane projection per constraint row
    Full(SdmParams),
    /// the memory-efficient variant for `A x = b`
    Linear(SdmParams),
    Kaczmarz {
        #[serde(default)]
        order: IndexOrder,
    },
    KaczmarzMode {
        #[serde(default)]
        order: IndexOrder,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PdParams {
    pub gamma: f64,
    pub tau: f64,
    pub estimator: EstimatorKind,
    #[serde(default = "one")]
    pub batch: usize,
    #[serde(default)]
    pub init: PddyInit,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SplittingMethod {
    Pddy(PdParams),
    Pd3o(PdParams),
    /// `tau` is the primal stepsize, `gamma` the dual one.
    CondatVu {
        tau: f64,
        gamma: f64,
        form: CvForm,
    },
    Licosgd(PdParams),
    Prilicosgd(PdParams),
    Destroy {
        params: PdParams,
        nodes: usize,
        edges: Vec<(usize, usize)>,
    },
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: RunConfig = serde_json::from_str(text).map_err(|e| OptError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_path(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| OptError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    /// Compact JSON with object keys sorted.
    pub fn canonical_json(&self) -> String {
        // serde_json::Value keeps object keys in a BTreeMap
        let v = serde_json::to_value(self).expect("config serializes");
        serde_json::to_string(&v).expect("value serializes")
    }

    /// SHA-256 of the canonical JSON, hex encoded.
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.canonical_json().as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(OptError::Config(m));
        let p = &self.problem;
        if !(self.reference_tol > 0.0) {
            return bad(format!("reference_tol must be positive, got {}", self.reference_tol));
        }
        for (name, v) in [("l1", p.l1), ("l2", p.l2), ("tv", p.tv)] {
            if !(v >= 0.0 && v.is_finite()) {
                return bad(format!("{name} must be a finite nonnegative number, got {v}"));
            }
        }
        match &p.data {
            DataSource::Synthetic { n, d, .. } if *n == 0 || *d == 0 => {
                return bad("synthetic data needs n, d >= 1".into())
            }
            DataSource::GaussianSystem { d } if *d == 0 => return bad("gaussian_system needs d >= 1".into()),
            _ => {}
        }
        if let Some(c) = &p.constraints {
            if c.rows == 0 || c.rank == Some(0) || c.rank.is_some_and(|r| r > c.rows) {
                return bad(format!("bad constraint shape {c:?}"));
            }
            if p.l1 > 0.0 || p.tv > 0.0 {
                return bad("constraints cannot be combined with l1 or tv".into());
            }
        }
        let needs_constraints = matches!(
            &self.solver,
            SolverSpec::Sdm { .. }
                | SolverSpec::Splitting {
                    method: SplittingMethod::Licosgd(_) | SplittingMethod::Prilicosgd(_)
                }
        );
        if needs_constraints && p.constraints.is_none() {
            return bad(format!("solver {:?} needs problem.constraints", self.solver.family()));
        }
        let smooth_only = match &self.solver {
            SolverSpec::Federated { method, .. } => !matches!(method, FedMethod::FedRr { .. }),
            SolverSpec::Adaptive { .. } => true,
            SolverSpec::Splitting { method } => !matches!(
                method,
                SplittingMethod::Pddy(_) | SplittingMethod::Pd3o(_) | SplittingMethod::CondatVu { .. }
            ),
            _ => false,
        };
        if smooth_only && (p.l1 > 0.0 || p.tv > 0.0) {
            return bad(format!("the {} solver does not handle l1 or tv", self.solver.family()));
        }
        let has_tv_solver = matches!(
            &self.solver,
            SolverSpec::Splitting {
                method: SplittingMethod::Pddy(_) | SplittingMethod::Pd3o(_) | SplittingMethod::CondatVu { .. }
            }
        );
        if p.tv > 0.0 && !has_tv_solver {
            return bad("tv is only supported by pddy, pd3o and condat_vu".into());
        }
        match &self.solver {
            SolverSpec::Federated { workers, .. } | SolverSpec::Diana { workers, .. } if *workers == 0 => {
                bad("workers must be >= 1".into())
            }
            SolverSpec::Splitting {
                method: SplittingMethod::Destroy { nodes, .. },
            } if *nodes == 0 => bad("destroy needs at least one node".into()),
            _ => Ok(()),
        }
    }
}
