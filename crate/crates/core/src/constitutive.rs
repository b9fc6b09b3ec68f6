//! The implicit constitutive relation `D = alpha T + gamma mu(|T|) T` and the
//! element-local nonlinear stress solves built on it.
//!
//! The viscosity-like function is `mu(s) = 1/sqrt(1 + s^2)`. It satisfies
//! `0 < mu <= 1`, `mu(s) s < 1`, `d/ds (mu(s) s) > 0`, and the map
//! `T -> mu(|T|) T` is monotone and Lipschitz with constant 1.

use thiserror::Error;

use crate::assembly::StressElement;
use crate::dofs::STRESS_PER_ELEMENT;
use crate::tensor::{SymTensor, FROBENIUS_WEIGHTS};

/// Bound on `mu(s) s`.
pub const C1: f64 = 1.0;
/// Maximum of `mu`.
pub const MU_MAX: f64 = 1.0;
/// Lipschitz constant of `T -> mu(|T|) T`.
pub const LAMBDA: f64 = 1.0;

/// Newton iteration cap for element-local stress solves.
pub const MAX_LOCAL_NEWTON: usize = 50;
const MAX_HALVINGS: usize = 30;

#[inline]
pub fn mu(s: f64) -> f64 {
    1.0 / (1.0 + s * s).sqrt()
}

#[inline]
pub fn mu_derivative(s: f64) -> f64 {
    -s / (1.0 + s * s).powf(1.5)
}

/// `mu'(s) / s`, continuous at `s = 0` for this `mu`.
#[inline]
pub fn mu_derivative_over_s(s: f64) -> f64 {
    -1.0 / (1.0 + s * s).powf(1.5)
}

/// The nonlinear part `mu(|T|) T`.
#[inline]
pub fn flux(t: &SymTensor) -> SymTensor {
    mu(t.norm()) * *t
}

/// Derivative of `T -> mu(|T|) T` in the `(xx, xy, yy)` parameterisation.
pub fn flux_jacobian(t: &SymTensor) -> [[f64; 3]; 3] {
    let s = t.norm();
    let m = mu(s);
    let d = mu_derivative_over_s(s);
    let c = t.components();
    let mut j = [[0.0; 3]; 3];
    for a in 0..3 {
        for b in 0..3 {
            j[a][b] = d * c[a] * FROBENIUS_WEIGHTS[b] * c[b];
        }
        j[a][a] += m;
    }
    j
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConstitutiveModel {
    pub alpha: f64,
    pub gamma: f64,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConstitutiveError {
    #[error("invalid model parameters alpha={alpha}, gamma={gamma} (need alpha > 0, gamma >= 0)")]
    InvalidParameters { alpha: f64, gamma: f64 },
    #[error("invalid local problem coefficients a={a}, b={b}")]
    InvalidLocalProblem { a: f64, b: f64 },
    #[error(
        "local stress solve on element {element} did not converge: residual {residual:e} after {iterations} iterations"
    )]
    LocalNewton { element: usize, residual: f64, iterations: usize },
}

impl ConstitutiveModel {
    pub fn new(alpha: f64, gamma: f64) -> Result<Self, ConstitutiveError> {
        if !(alpha > 0.0) || !(gamma >= 0.0) || !alpha.is_finite() || !gamma.is_finite() {
            return Err(ConstitutiveError::InvalidParameters { alpha, gamma });
        }
        Ok(Self { alpha, gamma })
    }

    /// `alpha T + gamma mu(|T|) T`
    pub fn apply_map(&self, t: &SymTensor) -> SymTensor {
        self.alpha * *t + self.gamma * flux(t)
    }

    /// `alpha I + gamma [mu I + (mu'/|T|) t (W t)^T]` on the components.
    pub fn map_jacobian(&self, t: &SymTensor) -> [[f64; 3]; 3] {
        let mut j = flux_jacobian(t);
        for (a, row) in j.iter_mut().enumerate() {
            for v in row.iter_mut() {
                *v *= self.gamma;
            }
            row[a] += self.alpha;
        }
        j
    }
}

/// Element problem: find `T` with `int_E (a T + b mu(|T|) T) : S = rhs(S)`
/// for all element stress test functions `S`; `rhs` holds the moments.
#[derive(Debug, Clone, Copy)]
pub struct LocalStressProblem<'a> {
    pub a: f64,
    pub b: f64,
    pub rhs: &'a [f64; STRESS_PER_ELEMENT],
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LocalSolveInfo {
    pub iterations: usize,
    pub residual: f64,
}

pub type Coeffs = [f64; STRESS_PER_ELEMENT];

/// Galerkin residual `int (a T + b mu(|T|)T):Phi_i - rhs_i` and, optionally, its Jacobian.
fn local_residual(
    elem: &StressElement,
    problem: &LocalStressProblem<'_>,
    coeffs: &Coeffs,
    jac: Option<&mut [[f64; STRESS_PER_ELEMENT]; STRESS_PER_ELEMENT]>,
) -> Coeffs {
    let mut r = elem.mass_apply(coeffs);
    for i in 0..STRESS_PER_ELEMENT {
        r[i] = problem.a * r[i] - problem.rhs[i];
    }
    if problem.b == 0.0 {
        if let Some(j) = jac {
            elem.mass_matrix_into(problem.a, j);
        }
        return r;
    }
    let nonlinear = elem.flux_moments(coeffs, jac.is_some());
    for i in 0..STRESS_PER_ELEMENT {
        r[i] += problem.b * nonlinear.moments[i];
    }
    if let Some(j) = jac {
        elem.mass_matrix_into(problem.a, j);
        let fj = nonlinear.jacobian.expect("jacobian requested");
        for (jr, fr) in j.iter_mut().zip(fj.iter()) {
            for (v, f) in jr.iter_mut().zip(fr.iter()) {
                *v += problem.b * f;
            }
        }
    }
    r
}

/// Solves one element problem by Newton's method with residual-halving
/// backtracking. The residual is measured in `L2(E)` through its Riesz
/// representative in the element stress space, `sqrt(r^T M^{-1} r)`.
pub fn solve_local_stress(
    elem: &StressElement,
    problem: &LocalStressProblem<'_>,
    guess: &Coeffs,
    tol: f64,
) -> Result<(Coeffs, LocalSolveInfo), ConstitutiveError> {
    if !(problem.a > 0.0) || !(problem.b >= 0.0) {
        return Err(ConstitutiveError::InvalidLocalProblem { a: problem.a, b: problem.b });
    }
    let mut t = *guess;
    let mut jac = [[0.0; STRESS_PER_ELEMENT]; STRESS_PER_ELEMENT];
    let mut r = local_residual(elem, problem, &t, Some(&mut jac));
    let mut res = elem.dual_norm(&r);
    let mut it = 0;
    while res > tol {
        if it == MAX_LOCAL_NEWTON {
            return Err(ConstitutiveError::LocalNewton { element: usize::MAX, residual: res, iterations: it });
        }
        it += 1;
        let step = dense_solve(&jac, &r).ok_or(ConstitutiveError::LocalNewton {
            element: usize::MAX,
            residual: res,
            iterations: it,
        })?;
        let mut lambda = 1.0;
        let mut accepted = None;
        for _ in 0..=MAX_HALVINGS {
            let mut trial = t;
            for i in 0..STRESS_PER_ELEMENT {
                trial[i] -= lambda * step[i];
            }
            let rt = local_residual(elem, problem, &trial, None);
            let rn = elem.dual_norm(&rt);
            if rn < res || rn <= tol {
                accepted = Some(trial);
                break;
            }
            lambda *= 0.5;
        }
        let Some(next) = accepted else {
            return Err(ConstitutiveError::LocalNewton { element: usize::MAX, residual: res, iterations: it });
        };
        t = next;
        r = local_residual(elem, problem, &t, Some(&mut jac));
        res = elem.dual_norm(&r);
    }
    Ok((t, LocalSolveInfo { iterations: it, residual: res }))
}

/// Gaussian elimination with partial pivoting for the small element systems.
pub(crate) fn dense_solve<const N: usize>(a: &[[f64; N]; N], b: &[f64; N]) -> Option<[f64; N]> {
    let mut m = *a;
    let mut x = *b;
    for k in 0..N {
        let p = (k..N).max_by(|&i, &j| m[i][k].abs().total_cmp(&m[j][k].abs()))?;
        if m[p][k] == 0.0 || !m[p][k].is_finite() {
            return None;
        }
        m.swap(k, p);
        x.swap(k, p);
        for i in k + 1..N {
            let f = m[i][k] / m[k][k];
            if f != 0.0 {
                for j in k..N {
                    m[i][j] -= f * m[k][j];
                }
                x[i] -= f * x[k];
            }
        }
    }
    for k in (0..N).rev() {
        let mut s = x[k];
        for j in k + 1..N {
            s -= m[k][j] * x[j];
        }
        x[k] = s / m[k][k];
    }
    Some(x)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mu_values() {
        assert_eq!(mu(0.0), 1.0);
        assert!((mu(1.0) - 1.0 / 2f64.sqrt()).abs() < 1e-16);
        for s in [10.0, 100.0, 1e6] {
            assert!(mu(s) * s < C1);
        }
    }

    #[test]
    fn apply_map_examples() {
        let m = ConstitutiveModel::new(1.0, 1.0).unwrap();
        assert_eq!(m.apply_map(&SymTensor::ZERO), SymTensor::ZERO);
        let t = SymTensor::diag(1.0, -1.0);
        let got = m.apply_map(&t);
        let expect = (1.0 + 1.0 / 3f64.sqrt()) * t;
        assert!((got - expect).norm() < 1e-15);
        let lin = ConstitutiveModel::new(1.0, 0.0).unwrap();
        let t = SymTensor::new(0.3, -2.0, 5.0);
        assert_eq!(lin.apply_map(&t), t);
    }

    #[test]
    fn jacobian_limits() {
        let m = ConstitutiveModel::new(2.0, 3.0).unwrap();
        let j = m.map_jacobian(&SymTensor::ZERO);
        for a in 0..3 {
            for b in 0..3 {
                assert_eq!(j[a][b], if a == b { 5.0 } else { 0.0 });
            }
        }
        let lin = ConstitutiveModel::new(2.0, 0.0).unwrap();
        let j = lin.map_jacobian(&SymTensor::new(1.0, 2.0, 3.0));
        for a in 0..3 {
            for b in 0..3 {
                assert_eq!(j[a][b], if a == b { 2.0 } else { 0.0 });
            }
        }
    }

    #[test]
    fn jacobian_matches_finite_differences() {
        let m = ConstitutiveModel::new(1.0, 1.0).unwrap();
        let t = SymTensor::new(0.7, -1.3, 0.4);
        let j = m.map_jacobian(&t);
        let eps = 1e-6;
        for b in 0..3 {
            let mut c = t.components();
            c[b] += eps;
            let plus = m.apply_map(&SymTensor::from_components(c)).components();
            c[b] -= 2.0 * eps;
            let minus = m.apply_map(&SymTensor::from_components(c)).components();
            for a in 0..3 {
                let fd = (plus[a] - minus[a]) / (2.0 * eps);
                assert!((fd - j[a][b]).abs() < 1e-8, "a={a} b={b}");
            }
        }
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(ConstitutiveModel::new(0.0, 1.0).is_err());
        assert!(ConstitutiveModel::new(1.0, -1.0).is_err());
    }

    #[test]
    fn dense_solve_small() {
        let a = [[2.0, 1.0], [1.0, 2.0]];
        let x = dense_solve(&a, &[3.0, 3.0]).unwrap();
        assert!((x[0] - 1.0).abs() < 1e-15 && (x[1] - 1.0).abs() < 1e-15);
        assert!(dense_solve(&[[0.0, 0.0], [0.0, 1.0]], &[1.0, 1.0]).is_none());
    }
}
