//! Errors against the exact solution and observed convergence rates.

use rayon::prelude::*;
use thiserror::Error;

use crate::assembly::Discretization;
use crate::dofs::STRESS_PER_ELEMENT;
use crate::manufactured::ManufacturedCase;
use crate::solvers::FlowState;
use crate::tensor::SymTensor;

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ErrorTriple {
    /// `||T - T_h||_{L2}` of the component vector `(T11, T12, T22)`; the
    /// shear component is counted once, unlike the Frobenius norm
    pub err_t: f64,
    /// `||grad(u - u_h)||_{L2}` (full gradient)
    pub err_u: f64,
    /// `||p - p_h||_{L2}` after shifting both to zero mean
    pub err_p: f64,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NormError {
    #[error("{field} vector has length {found}, discretization expects {expected}")]
    Mismatch { field: &'static str, expected: usize, found: usize },
    #[error("convergence rates need at least two levels")]
    TooFewLevels,
    #[error("error value {0} at position {1} is not positive")]
    NonPositive(f64, usize),
}

/// Discrete fields at the error-quadrature points of one element.
struct FineSample {
    t: SymTensor,
    grad_u: [[f64; 2]; 2],
    p: f64,
}

fn check_lengths(disc: &Discretization, state: &FlowState) -> Result<(), NormError> {
    let s = &disc.spaces;
    for (field, expected, found) in
        [("stress", s.n_t, state.t.len()), ("velocity", s.n_u, state.u.len()), ("pressure", s.n_p, state.p.len())]
    {
        if expected != found {
            return Err(NormError::Mismatch { field, expected, found });
        }
    }
    Ok(())
}

fn sample(disc: &Discretization, state: &FlowState, e: usize, q: usize) -> FineSample {
    let k = &disc.kernel;
    let phi = k.fine_q2.values_at(q);
    let grads = &k.fine_q2_grad[9 * q..9 * q + 9];
    let te = &state.t[STRESS_PER_ELEMENT * e..STRESS_PER_ELEMENT * (e + 1)];
    let mut c = [0.0; 3];
    for (comp, out) in c.iter_mut().enumerate() {
        *out = (0..9).map(|i| phi[i] * te[9 * comp + i]).sum();
    }
    let ue = disc.element_velocity(&state.u, e);
    let mut grad_u = [[0.0; 2]; 2];
    for i in 0..9 {
        for comp in 0..2 {
            grad_u[comp][0] += grads[i][0] * ue[2 * i + comp];
            grad_u[comp][1] += grads[i][1] * ue[2 * i + comp];
        }
    }
    let pe = disc.element_pressure(&state.p, e);
    let pv = k.fine_q1.values_at(q);
    let p = (0..4).map(|i| pv[i] * pe[i]).sum();
    FineSample { t: SymTensor::from_components(c), grad_u, p }
}

/// `T11^2 + T12^2 + T22^2`: the tabulated stress errors use this measure.
fn component_norm_sq(t: &SymTensor) -> f64 {
    t.components().iter().map(|c| c * c).sum()
}

/// Errors of `state` against the exact fields of `case`, by the fine rule.
pub fn compute_errors(
    disc: &Discretization,
    state: &FlowState,
    case: &ManufacturedCase,
) -> Result<ErrorTriple, NormError> {
    check_lengths(disc, state)?;
    // per element: [int |dT|^2, int |d grad u|^2, int dp, int dp^2]
    let sums = (0..disc.n_elements())
        .into_par_iter()
        .map(|e| {
            let mut acc = [0.0; 4];
            for (q, x) in disc.fine_points(e).enumerate() {
                let w = disc.kernel.fine_weights[q];
                let s = sample(disc, state, e, q);
                acc[0] += w * component_norm_sq(&(case.stress(x) - s.t));
                let g = case.velocity_gradient(x);
                for i in 0..2 {
                    for j in 0..2 {
                        acc[1] += w * (g[i][j] - s.grad_u[i][j]).powi(2);
                    }
                }
                let dp = case.pressure(x) - s.p;
                acc[2] += w * dp;
                acc[3] += w * dp * dp;
            }
            acc
        })
        .reduce(|| [0.0; 4], |a, b| [a[0] + b[0], a[1] + b[1], a[2] + b[2], a[3] + b[3]]);
    // int (dp - mean)^2 = int dp^2 - (int dp)^2 / |Omega|
    let area = disc.mesh.area();
    let err_p_sq = (sums[3] - sums[2] * sums[2] / area).max(0.0);
    Ok(ErrorTriple { err_t: sums[0].sqrt(), err_u: sums[1].sqrt(), err_p: err_p_sq.sqrt() })
}

/// `log2(e_k / e_{k+1})` for consecutive levels.
pub fn convergence_rate(errors: &[f64]) -> Result<Vec<f64>, NormError> {
    if errors.len() < 2 {
        return Err(NormError::TooFewLevels);
    }
    if let Some((i, &v)) = errors.iter().enumerate().find(|(_, v)| !(**v > 0.0)) {
        return Err(NormError::NonPositive(v, i));
    }
    Ok(errors.windows(2).map(|w| (w[0] / w[1]).log2()).collect())
}
