use ndarray::Array1;

use super::{FiniteSumObjective, Smooth};
use crate::error::{OptError, Result};
use crate::linalg;
use crate::prox::ProxTerm;

pub const REFERENCE_MAX_ITER: usize = 200_000;

/// High-accuracy solution of `min f + ψ` by accelerated proximal gradient
/// with step `1/L`. Returns `(x*, f(x*) + ψ(x*))`.
pub fn reference_solution(f: &FiniteSumObjective, psi: &ProxTerm, tol: f64) -> Result<(Array1<f64>, f64)> {
    let x0 = Array1::zeros(f.dim());
    let x = accelerated_prox_grad(
        f,
        f.smoothness(),
        f.strong_convexity() + psi.mu(),
        psi,
        x0,
        tol,
        REFERENCE_MAX_ITER,
    )?;
    let v = f.value(&x) + psi.value(&x);
    Ok((x, v))
}

/// Accelerated proximal gradient on any smooth `f` with known `L` and `mu`.
///
/// Momentum is `(√L-√μ)/(√L+√μ)` when `mu > 0` and the usual `t_k`
/// sequence otherwise, with gradient-based restarts. Stops once the
/// gradient-mapping step `|x⁺ - y| <= tol * max(1, |x⁺|)`.
pub fn accelerated_prox_grad<S: Smooth + ?Sized>(
    f: &S,
    l: f64,
    mu: f64,
    psi: &ProxTerm,
    x0: Array1<f64>,
    tol: f64,
    max_iter: usize,
) -> Result<Array1<f64>> {
    if !(tol > 0.0) {
        return Err(OptError::InvalidParameter(format!("tol = {tol}")));
    }
    if !(l > 0.0) || !l.is_finite() {
        return Err(OptError::InvalidParameter(format!("L = {l}")));
    }
    let step = 1.0 / l;
    let strongly = mu > 0.0;
    let beta_sc = (l.sqrt() - mu.min(l).sqrt()) / (l.sqrt() + mu.min(l).sqrt());
    let mut x = x0.clone();
    let mut y = x0;
    let mut t = 1.0f64;
    let mut residual = f64::INFINITY;
    for _ in 0..max_iter {
        let mut u = y.clone();
        u.scaled_add(-step, &f.grad(&y));
        let x_new = psi.prox(step, &u);
        if x_new.iter().any(|v| !v.is_finite()) {
            return Err(OptError::Numerical(
                "reference solver produced a non-finite iterate".into(),
            ));
        }
        let gm = &x_new - &y;
        residual = linalg::norm(&gm);
        if residual <= tol * linalg::norm(&x_new).max(1.0) {
            return Ok(x_new);
        }
        let dx = &x_new - &x;
        // restart when the momentum points uphill
        if -gm.dot(&dx) > 0.0 {
            t = 1.0;
            y = x_new.clone();
        } else {
            let beta = if strongly {
                beta_sc
            } else {
                let t_new = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
                let b = (t - 1.0) / t_new;
                t = t_new;
                b
            };
            y = &x_new + &(dx * beta);
        }
        x = x_new;
    }
    Err(OptError::NonConvergence {
        iters: max_iter,
        residual,
    })
}
