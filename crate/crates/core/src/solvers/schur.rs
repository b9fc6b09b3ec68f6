//! Schur-complement solution of saddle-point systems
//! `[A B^T; B 0][U; P] = [F; G]` with a direct solver for `A`.

use crate::sparse::{
    cg, dot, gmres, CsrMatrix, FnOperator, FnPreconditioner, KrylovReport, LinalgError, LuFactorization,
};

use super::SolverError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KrylovMethod {
    Cg,
    Gmres { restart: usize },
}

/// Iteration cap for the pressure Krylov solve.
pub const MAX_SCHUR_ITERATIONS: usize = 2000;

#[derive(Debug, Clone)]
pub struct SaddleSolution {
    pub u: Vec<f64>,
    pub p: Vec<f64>,
    pub report: KrylovReport,
}

/// Removes the `l2` mean.
pub(crate) fn remove_mean(v: &mut [f64]) {
    if v.is_empty() {
        return;
    }
    let m = v.iter().sum::<f64>() / v.len() as f64;
    v.iter_mut().for_each(|x| *x -= m);
}

/// Solves `B A^{-1} B^T P = B A^{-1} F - G` on the complement of the constant
/// pressure mode, preconditioned by the pressure mass matrix, and then
/// recovers `U = A^{-1}(F - B^T P)`. The pressure is returned with zero `l2`
/// mean; callers re-centre it in whatever sense they need.
pub fn solve_saddle(
    a: &LuFactorization,
    b: &CsrMatrix,
    f: &[f64],
    g: &[f64],
    pressure_mass: &LuFactorization,
    method: KrylovMethod,
    rel_tol: f64,
) -> Result<SaddleSolution, SolverError> {
    let n_u = a.dim();
    let n_p = b.nrows();
    if b.ncols() != n_u || f.len() != n_u {
        return Err(LinalgError::DimensionMismatch { expected: n_u, found: f.len().min(b.ncols()) }.into());
    }
    if g.len() != n_p || pressure_mass.dim() != n_p {
        return Err(LinalgError::DimensionMismatch { expected: n_p, found: g.len() }.into());
    }
    let ainv_f = a.solve(f);
    let mut rhs = b.mul_vec(&ainv_f);
    for (r, gi) in rhs.iter_mut().zip(g) {
        *r -= gi;
    }
    // the constant mode is in the kernel of B^T; drop the matching
    // (incompatible) component of the right-hand side
    remove_mean(&mut rhs);
    let rhs_norm = dot(&rhs, &rhs).sqrt();
    let op = FnOperator::new(n_p, |x: &[f64], y: &mut [f64]| {
        let mut w = b.mul_transpose_vec(x);
        a.solve_in_place(&mut w);
        b.mul_vec_into(&w, y);
        remove_mean(y);
    });
    let precond = FnPreconditioner(|r: &[f64], z: &mut [f64]| {
        z.copy_from_slice(r);
        remove_mean(z);
        pressure_mass.solve_in_place(z);
        remove_mean(z);
    });
    let tol = rel_tol * rhs_norm;
    let (p, report) = match method {
        KrylovMethod::Cg => cg(&op, &rhs, &precond, tol, MAX_SCHUR_ITERATIONS)?,
        KrylovMethod::Gmres { restart } => gmres(&op, &rhs, &precond, tol, restart, MAX_SCHUR_ITERATIONS)?,
    };
    if !report.converged {
        return Err(SolverError::Krylov { iterations: report.iterations, residual: report.residual_norm, target: tol });
    }
    let mut u = b.mul_transpose_vec(&p);
    for (ui, fi) in u.iter_mut().zip(f) {
        *ui = fi - *ui;
    }
    a.solve_in_place(&mut u);
    Ok(SaddleSolution { u, p, report })
}
