//! Variance-reduced gradient estimators and the splitting solvers built on
//! them: stochastic decoupling (with its Kaczmarz reduction), PDDY, PD3O,
//! Condat-Vũ, LiCoSGD/PriLiCoSGD and DESTROY.

pub mod destroy;
pub mod estimator;
pub mod linop;
pub mod primal_dual;
pub mod sdm;

pub use destroy::{destroy_run, Destroy};
pub use estimator::{EstimatorConstants, EstimatorKind, GradEstimator};
pub use linop::{laplacian, spectral_norm, LinOp};
pub use primal_dual::{
    condat_vu_run, licosgd_run, pd3o_run, pddy_run, prilicosgd_run, prox_conj, CvForm, LiCoSgd, Pd3o, PdOptions,
    PdProblem, Pddy, PddyInit, PriLiCoSgd,
};
pub use sdm::{
    hyperplanes, importance_probs, kaczmarz_iterates, randomized_kaczmarz, sdm_kaczmarz_iterates, sdm_kaczmarz_mode,
    sdm_linear_run, sdm_run, sdm_step, DualState, IndexOrder, Sdm, SdmLinear, SdmOptions, SdmStepsize,
};
