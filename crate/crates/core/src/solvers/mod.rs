//! Navier–Stokes Newton solves and the two outer iterations that couple them
//! to the element-local stress equations.

mod newton;
mod outer;
mod schur;

pub use newton::{solve_navier_stokes, NewtonReport};
pub use outer::{
    a_priori_check, lm_step1, lm_step2_stress, run, run_fixed_point, run_lions_mercier, solve_stress_field,
    system_residuals, FlowProblem, OuterRecord, OuterTrace, SystemResiduals,
};
pub use schur::{solve_saddle, KrylovMethod, SaddleSolution, MAX_SCHUR_ITERATIONS};

use thiserror::Error;

use crate::assembly::Discretization;
use crate::constitutive::ConstitutiveError;
use crate::dofs::SystemSpaces;
use crate::sparse::LinalgError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Algorithm {
    LionsMercier,
    FixedPoint,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverConfig {
    /// Pseudo-time step of the Lions–Mercier splitting.
    pub tau: f64,
    /// Relative tolerance on the outer increment.
    pub delta_outer: f64,
    /// Relative tolerance on the Newton increment.
    pub newton_tol: f64,
    /// Relative tolerance of the pressure Krylov solves.
    pub krylov_rel_tol: f64,
    pub max_outer: usize,
    pub max_newton: usize,
    pub gmres_restart: usize,
    pub algorithm: Algorithm,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            tau: 0.5,
            delta_outer: 1e-5,
            newton_tol: 1e-6,
            krylov_rel_tol: 1e-6,
            max_outer: 500,
            max_newton: 25,
            gmres_restart: 100,
            algorithm: Algorithm::LionsMercier,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<(), SolverError> {
        let positive = |v: f64| v > 0.0 && v.is_finite();
        let bad = if !positive(self.tau) {
            Some(format!("tau must be positive, got {}", self.tau))
        } else if !positive(self.delta_outer) || !positive(self.newton_tol) || !positive(self.krylov_rel_tol) {
            Some("tolerances must be positive".to_string())
        } else if self.max_outer == 0 || self.max_newton == 0 || self.gmres_restart == 0 {
            Some("iteration limits must be positive".to_string())
        } else {
            None
        };
        bad.map_or(Ok(()), |m| Err(SolverError::InvalidConfig(m)))
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SolverError {
    #[error("invalid solver configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error(
        "pressure Krylov solve did not converge: residual {residual:e} > {target:e} after {iterations} iterations"
    )]
    Krylov { iterations: usize, residual: f64, target: f64 },
    #[error("Newton iteration did not converge: increment {metric:e} after {iterations} steps")]
    NewtonDiverged { iterations: usize, metric: f64 },
    #[error(transparent)]
    LocalStress(#[from] ConstitutiveError),
    #[error("outer iteration did not converge: increment {metric:e} after {iterations} iterations")]
    MaxOuter { iterations: usize, metric: f64 },
    #[error("outer iteration {iteration}: {source}")]
    Outer {
        iteration: usize,
        #[source]
        source: Box<SolverError>,
    },
}

/// Coefficients of one iterate `(T_h, u_h, p_h)`.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowState {
    pub t: Vec<f64>,
    /// Full velocity vector; constrained entries hold the boundary values.
    pub u: Vec<f64>,
    pub p: Vec<f64>,
}

impl FlowState {
    pub fn zeros(spaces: &SystemSpaces) -> Self {
        Self { t: vec![0.0; spaces.n_t], u: vec![0.0; spaces.n_u], p: vec![0.0; spaces.n_p] }
    }
}

/// Relative combined increment
/// `(||dT|| + ||grad du|| + ||dp||) / (||T+|| + ||grad u+|| + ||p+||)`;
/// zero when both states vanish.
pub fn outer_metric(disc: &Discretization, prev: &FlowState, next: &FlowState) -> f64 {
    let diff = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x - y).collect::<Vec<_>>();
    let num = disc.stress_norm(&diff(&next.t, &prev.t))
        + disc.velocity_grad_norm(&diff(&next.u, &prev.u))
        + disc.pressure_norm(&diff(&next.p, &prev.p));
    let den = disc.stress_norm(&next.t) + disc.velocity_grad_norm(&next.u) + disc.pressure_norm(&next.p);
    if den > 0.0 {
        num / den
    } else if num == 0.0 {
        0.0
    } else {
        f64::INFINITY
    }
}
