//! Datasets, finite-sum objectives, synthetic generators and the reference solver.

mod generators;
mod libsvm;
mod objective;
mod reference;

pub use generators::{
    fused_difference, fused_spectrum, gaussian_matrix, gaussian_system, gaussian_vector, synthetic_classification,
};
pub use libsvm::{parse_libsvm, serialize, Dataset, SparseRow};
pub use objective::{
    make_least_squares, make_linear_sum, make_logistic, make_quadratic_distance, make_quadratic_sum, sigmoid,
    ComponentFn, FiniteSumObjective, FnSmooth, ObjectiveKind, QuadraticComponents, Smooth,
};
pub use reference::{accelerated_prox_grad, reference_solution, REFERENCE_MAX_ITER};

use ndarray::Array1;

/// `(1/n) Σ |∇f_i(x) - ∇f(x)|^2`.
pub fn sigma_star(f: &FiniteSumObjective, x: &Array1<f64>) -> f64 {
    f.sigma_star(x)
}

/// `D_f(x, y) = f(x) - f(y) - <∇f(y), x - y>`.
pub fn bregman(f: &FiniteSumObjective, x: &Array1<f64>, y: &Array1<f64>) -> f64 {
    f.bregman(x, y)
}
