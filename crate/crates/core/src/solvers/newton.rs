//! Newton's method for the discrete Navier–Stokes problem with a fixed
//! right-hand side.

use crate::assembly::{
    assemble_convection, assemble_convection_jacobian, ConvectionMode, ConvectionOutput, Discretization,
};
use crate::constitutive::ConstitutiveModel;
use crate::dofs::DirichletData;
use crate::sparse::LuFactorization;

use super::schur::{solve_saddle, KrylovMethod};
use super::{SolverConfig, SolverError};

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct NewtonReport {
    /// Newton steps (the Stokes warm start is not counted).
    pub iterations: usize,
    /// Pressure Krylov iterations summed over all linear solves.
    pub krylov_iterations: usize,
    /// Final relative increment.
    pub metric: f64,
}

/// `(1/alpha) a(u, v_i) + d(u; u, v_i) - rhs_i` on the free rows.
fn momentum_residual(
    disc: &Discretization,
    model: &ConstitutiveModel,
    u: &[f64],
    rhs: &[f64],
    convection: bool,
) -> Vec<f64> {
    let mut r = disc.viscous_residual(u);
    let inv_alpha = 1.0 / model.alpha;
    r.iter_mut().for_each(|v| *v *= inv_alpha);
    if convection {
        let ConvectionOutput::Residual(c) = assemble_convection(disc, u, ConvectionMode::Residual) else {
            unreachable!("residual mode returns a vector")
        };
        r.iter_mut().zip(&c).for_each(|(a, b)| *a += b);
    }
    r.iter_mut().zip(rhs).for_each(|(a, b)| *a -= b);
    r
}

/// `(u_next, du, p, krylov_iterations)`
type StepOutput = (Vec<f64>, Vec<f64>, Vec<f64>, usize);

/// One linearised solve `[J B^T; B 0][du; p] = [-R(u); -B u]`; returns the
/// updated velocity, the new pressure (zero mean) and the Krylov count.
fn linear_step(
    disc: &Discretization,
    model: &ConstitutiveModel,
    u: &[f64],
    rhs: &[f64],
    convection: bool,
    config: &SolverConfig,
) -> Result<StepOutput, SolverError> {
    let jac = if convection {
        assemble_convection_jacobian(disc, u, Some((&disc.kernel.viscous, 1.0 / model.alpha)))
    } else {
        disc.viscous.scaled(1.0 / model.alpha)
    };
    let lu = LuFactorization::new(&jac)?;
    let f: Vec<f64> = momentum_residual(disc, model, u, rhs, convection).iter().map(|v| -v).collect();
    let g: Vec<f64> = disc.divergence_action(u).iter().map(|v| -v).collect();
    let method = if convection { KrylovMethod::Gmres { restart: config.gmres_restart } } else { KrylovMethod::Cg };
    let sol = solve_saddle(&lu, &disc.divergence, &f, &g, &disc.pressure_mass_lu, method, config.krylov_rel_tol)?;
    let du = disc.spaces.extend_free(&sol.u);
    let mut next = u.to_vec();
    next.iter_mut().zip(&du).for_each(|(a, b)| *a += b);
    let mut p = sol.p;
    disc.center_pressure(&mut p);
    Ok((next, du, p, sol.report.iterations))
}

/// Solves `(1/alpha) a(u,v) + d(u;u,v) + b(v,p) = rhs(v)`, `b(u,q) = 0` with
/// `u = dirichlet` on the boundary. Without an initial guess the iteration
/// starts from the Stokes solution (convection dropped).
pub fn solve_navier_stokes(
    disc: &Discretization,
    dirichlet: &DirichletData,
    model: &ConstitutiveModel,
    rhs: &[f64],
    guess: Option<(&[f64], &[f64])>,
    config: &SolverConfig,
) -> Result<(Vec<f64>, Vec<f64>, NewtonReport), SolverError> {
    let mut report = NewtonReport::default();
    let (mut u, mut p) = match guess {
        Some((u0, p0)) => {
            let mut u = u0.to_vec();
            dirichlet.apply(&mut u);
            (u, p0.to_vec())
        }
        None => {
            let lift = dirichlet.lift(disc.spaces.n_u);
            let (u, _, p, k) = linear_step(disc, model, &lift, rhs, false, config)?;
            report.krylov_iterations += k;
            (u, p)
        }
    };
    for it in 1..=config.max_newton {
        let (next, du, p_next, k) = linear_step(disc, model, &u, rhs, true, config)?;
        report.krylov_iterations += k;
        let dp: Vec<f64> = p_next.iter().zip(&p).map(|(a, b)| a - b).collect();
        let num = disc.velocity_grad_norm(&du) + disc.pressure_norm(&dp);
        let den = disc.velocity_grad_norm(&next) + disc.pressure_norm(&p_next);
        let metric = if den > 0.0 {
            num / den
        } else if num == 0.0 {
            0.0
        } else {
            f64::INFINITY
        };
        u = next;
        p = p_next;
        report.iterations = it;
        report.metric = metric;
        log::trace!("newton {it}: increment {metric:.3e}, krylov {k}");
        if !metric.is_finite() {
            break;
        }
        if metric <= config.newton_tol {
            return Ok((u, p, report));
        }
    }
    Err(SolverError::NewtonDiverged { iterations: report.iterations, metric: report.metric })
}
