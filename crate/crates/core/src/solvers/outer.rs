//! Lions–Mercier splitting and the fixed-point iteration.

use rayon::prelude::*;

use crate::assembly::{
    assemble_forcing, assemble_stress_coupling_rhs, project_moments, strain_moments, tensor_field_moments,
    Discretization,
};
use crate::constitutive::{solve_local_stress, Coeffs, ConstitutiveError, ConstitutiveModel, LocalStressProblem};
use crate::dofs::{interpolate_dirichlet, DirichletData, STRESS_PER_ELEMENT as NT};
use crate::manufactured::ManufacturedCase;

use super::{outer_metric, solve_navier_stokes, Algorithm, FlowState, NewtonReport, SolverConfig, SolverError};

/// Everything that stays fixed during an outer iteration.
#[derive(Debug, Clone)]
pub struct FlowProblem<'a> {
    pub disc: &'a Discretization,
    pub dirichlet: DirichletData,
    pub model: ConstitutiveModel,
    /// `int f . v_i` on the free velocity DOFs.
    pub forcing: Vec<f64>,
    /// `int_E Phi_i : g` for the extra constitutive data.
    pub g_moments: Vec<f64>,
    /// `||g||_{L2}`
    pub g_norm: f64,
}

impl<'a> FlowProblem<'a> {
    pub fn new(
        disc: &'a Discretization,
        dirichlet: DirichletData,
        model: ConstitutiveModel,
        forcing: Vec<f64>,
        g_moments: Vec<f64>,
        g_norm: f64,
    ) -> Self {
        Self { disc, dirichlet, model, forcing, g_moments, g_norm }
    }

    /// Data of a manufactured solution: boundary interpolant, `f` and `g`.
    pub fn manufactured(disc: &'a Discretization, case: &ManufacturedCase) -> Self {
        let dirichlet = interpolate_dirichlet(&disc.spaces, |x| case.velocity(x));
        let forcing = assemble_forcing(disc, |x| case.f(x));
        let g_moments = tensor_field_moments(disc, |x| case.g(x));
        let g_norm = (0..disc.n_elements())
            .into_par_iter()
            .map(|e| {
                disc.fine_points(e)
                    .enumerate()
                    .map(|(q, x)| disc.kernel.fine_weights[q] * case.g(x).norm().powi(2))
                    .sum::<f64>()
            })
            .sum::<f64>()
            .sqrt();
        Self { disc, dirichlet, model: case.model, forcing, g_moments, g_norm }
    }

    /// Momentum right-hand side `f + (gamma/alpha) int mu(|T|) T : D(v)`.
    fn momentum_rhs(&self, t: &[f64]) -> Vec<f64> {
        let mut rhs = assemble_stress_coupling_rhs(self.disc, t, &self.model);
        rhs.iter_mut().zip(&self.forcing).for_each(|(a, b)| *a += b);
        rhs
    }

    /// Local residual tolerance `1e-6 sqrt(|E| / |Omega|)`.
    fn local_tol(&self) -> f64 {
        1e-6 * (self.disc.kernel.stress.area() / self.disc.mesh.area()).sqrt()
    }

    fn block(v: &[f64], e: usize) -> &[f64] {
        &v[NT * e..NT * (e + 1)]
    }

    fn block_array(v: &[f64], e: usize) -> Coeffs {
        let mut out = [0.0; NT];
        out.copy_from_slice(Self::block(v, e));
        out
    }
}

/// Per-iteration diagnostics.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OuterRecord {
    pub iteration: usize,
    pub metric: f64,
    pub newton_iterations: usize,
    pub krylov_iterations: usize,
    /// Largest local Newton count over all elements.
    pub local_newton_iterations: usize,
    /// `||T_h||`
    pub stress_norm: f64,
    /// `(||D(u_h)|| + ||g||) / alpha`
    pub a_priori_bound: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct OuterTrace {
    /// Newton solve of the initialisation (Lions–Mercier only).
    pub initial_newton: Option<NewtonReport>,
    pub records: Vec<OuterRecord>,
    pub converged: bool,
}

impl OuterTrace {
    pub fn iterations(&self) -> usize {
        self.records.len()
    }

    pub fn final_metric(&self) -> Option<f64> {
        self.records.last().map(|r| r.metric)
    }
}

/// Solves `int (a T + b mu(|T|) T) : S = rhs_e(S)` on every element.
/// Returns the coefficients and the largest local Newton count.
pub fn solve_stress_field(
    problem: &FlowProblem<'_>,
    a: f64,
    b: f64,
    rhs: impl Fn(usize) -> Coeffs + Sync,
    guess: &[f64],
) -> Result<(Vec<f64>, usize), ConstitutiveError> {
    let elem = &problem.disc.kernel.stress;
    let tol = problem.local_tol();
    let blocks: Vec<(Coeffs, usize)> = (0..problem.disc.n_elements())
        .into_par_iter()
        .map(|e| {
            let m = rhs(e);
            let lp = LocalStressProblem { a, b, rhs: &m };
            let g = FlowProblem::block_array(guess, e);
            solve_local_stress(elem, &lp, &g, tol).map(|(c, info)| (c, info.iterations)).map_err(|err| match err {
                ConstitutiveError::LocalNewton { residual, iterations, .. } => {
                    ConstitutiveError::LocalNewton { element: e, residual, iterations }
                }
                other => other,
            })
        })
        .collect::<Result<_, _>>()?;
    let max_it = blocks.iter().map(|b| b.1).max().unwrap_or(0);
    Ok((blocks.into_iter().flat_map(|b| b.0).collect(), max_it))
}

/// Step 1 of the splitting: the Galerkin zero of
/// `T + tau gamma mu(|T|) T - tau (D(u^k) + g) - (1 - alpha tau) T^k`.
pub fn lm_step1(
    problem: &FlowProblem<'_>,
    tau: f64,
    t_k: &[f64],
    u_k: &[f64],
) -> Result<(Vec<f64>, usize), ConstitutiveError> {
    let ConstitutiveModel { alpha, gamma } = problem.model;
    let strain = strain_moments(problem.disc, u_k);
    let elem = &problem.disc.kernel.stress;
    solve_stress_field(
        problem,
        1.0,
        tau * gamma,
        |e| {
            let mt = elem.mass_apply(&FlowProblem::block_array(t_k, e));
            let s = FlowProblem::block(&strain, e);
            let g = FlowProblem::block(&problem.g_moments, e);
            let mut m = [0.0; NT];
            for i in 0..NT {
                m[i] = tau * (s[i] + g[i]) + (1.0 - alpha * tau) * mt[i];
            }
            m
        },
        t_k,
    )
}

/// Stress update of step 2:
/// `(1/tau + alpha) T^{k+1} = T^{k+1/2}/tau + D(u^{k+1}) + g - gamma mu(|T^{k+1/2}|) T^{k+1/2}`.
pub fn lm_step2_stress(problem: &FlowProblem<'_>, tau: f64, t_half: &[f64], u_next: &[f64]) -> Vec<f64> {
    let ConstitutiveModel { alpha, gamma } = problem.model;
    let strain = strain_moments(problem.disc, u_next);
    let elem = &problem.disc.kernel.stress;
    let scale = 1.0 / (1.0 / tau + alpha);
    let blocks: Vec<Coeffs> = (0..problem.disc.n_elements())
        .into_par_iter()
        .map(|e| {
            let th = FlowProblem::block_array(t_half, e);
            let mt = elem.mass_apply(&th);
            let nl = if gamma == 0.0 { [0.0; NT] } else { elem.flux_moments(&th, false).moments };
            let s = FlowProblem::block(&strain, e);
            let g = FlowProblem::block(&problem.g_moments, e);
            let mut m = [0.0; NT];
            for i in 0..NT {
                m[i] = scale * (mt[i] / tau + s[i] + g[i] - gamma * nl[i]);
            }
            elem.mass_solve(&m)
        })
        .collect();
    blocks.into_iter().flatten().collect()
}

/// `(||T_h||, (||D(u_h)|| + ||g||) / alpha)`
pub fn a_priori_check(problem: &FlowProblem<'_>, state: &FlowState) -> (f64, f64) {
    let d = problem.disc;
    (d.stress_norm(&state.t), (d.strain_norm(&state.u) + problem.g_norm) / problem.model.alpha)
}

fn record(
    problem: &FlowProblem<'_>,
    iteration: usize,
    prev: &FlowState,
    next: &FlowState,
    newton: &NewtonReport,
    local: usize,
) -> OuterRecord {
    let metric = outer_metric(problem.disc, prev, next);
    let (stress_norm, a_priori_bound) = a_priori_check(problem, next);
    let r = OuterRecord {
        iteration,
        metric,
        newton_iterations: newton.iterations,
        krylov_iterations: newton.krylov_iterations,
        local_newton_iterations: local,
        stress_norm,
        a_priori_bound,
    };
    log::debug!(
        "outer {iteration}: metric {metric:.4e}, newton {}, krylov {}, local {local}",
        r.newton_iterations,
        r.krylov_iterations
    );
    r
}

fn wrap(iteration: usize) -> impl Fn(SolverError) -> SolverError {
    move |e| SolverError::Outer { iteration, source: Box::new(e) }
}

/// Lions–Mercier iteration from the Navier–Stokes initialisation
/// `T^0 = P_h (D(u^0) + g) / alpha`.
pub fn run_lions_mercier(
    problem: &FlowProblem<'_>,
    config: &SolverConfig,
) -> Result<(FlowState, OuterTrace), SolverError> {
    config.validate()?;
    let disc = problem.disc;
    let alpha = problem.model.alpha;
    let tau = config.tau;
    let (u0, p0, init) = solve_navier_stokes(disc, &problem.dirichlet, &problem.model, &problem.forcing, None, config)
        .map_err(wrap(0))?;
    let mut m0 = strain_moments(disc, &u0);
    m0.iter_mut().zip(&problem.g_moments).for_each(|(a, b)| *a = (*a + b) / alpha);
    let mut state = FlowState { t: project_moments(disc, &m0), u: u0, p: p0 };
    let mut trace = OuterTrace { initial_newton: Some(init), ..Default::default() };
    for k in 1..=config.max_outer {
        let (t_half, local) = lm_step1(problem, tau, &state.t, &state.u).map_err(|e| wrap(k)(e.into()))?;
        let rhs = problem.momentum_rhs(&t_half);
        let (u, p, newton) =
            solve_navier_stokes(disc, &problem.dirichlet, &problem.model, &rhs, Some((&state.u, &state.p)), config)
                .map_err(wrap(k))?;
        let t = lm_step2_stress(problem, tau, &t_half, &u);
        let next = FlowState { t, u, p };
        let r = record(problem, k, &state, &next, &newton, local);
        trace.records.push(r);
        state = next;
        if r.metric <= config.delta_outer {
            trace.converged = true;
            return Ok((state, trace));
        }
    }
    Err(SolverError::MaxOuter { iterations: config.max_outer, metric: trace.final_metric().unwrap_or(f64::NAN) })
}

/// Fixed-point iteration from the zero state: a Navier–Stokes solve with the
/// lagged stress, then the local monotone stress equations.
pub fn run_fixed_point(
    problem: &FlowProblem<'_>,
    config: &SolverConfig,
) -> Result<(FlowState, OuterTrace), SolverError> {
    config.validate()?;
    let disc = problem.disc;
    let ConstitutiveModel { alpha, gamma } = problem.model;
    let mut state = FlowState::zeros(&disc.spaces);
    let mut trace = OuterTrace::default();
    for k in 1..=config.max_outer {
        let rhs = problem.momentum_rhs(&state.t);
        let guess = (k > 1).then_some((state.u.as_slice(), state.p.as_slice()));
        let (u, p, newton) =
            solve_navier_stokes(disc, &problem.dirichlet, &problem.model, &rhs, guess, config).map_err(wrap(k))?;
        let strain = strain_moments(disc, &u);
        let (t, local) = solve_stress_field(
            problem,
            alpha,
            gamma,
            |e| {
                let s = FlowProblem::block(&strain, e);
                let g = FlowProblem::block(&problem.g_moments, e);
                let mut m = [0.0; NT];
                for i in 0..NT {
                    m[i] = s[i] + g[i];
                }
                m
            },
            &state.t,
        )
        .map_err(|e| wrap(k)(e.into()))?;
        let next = FlowState { t, u, p };
        let r = record(problem, k, &state, &next, &newton, local);
        trace.records.push(r);
        state = next;
        if r.metric <= config.delta_outer {
            trace.converged = true;
            return Ok((state, trace));
        }
    }
    Err(SolverError::MaxOuter { iterations: config.max_outer, metric: trace.final_metric().unwrap_or(f64::NAN) })
}

/// Dispatches on [`SolverConfig::algorithm`].
pub fn run(problem: &FlowProblem<'_>, config: &SolverConfig) -> Result<(FlowState, OuterTrace), SolverError> {
    match config.algorithm {
        Algorithm::LionsMercier => run_lions_mercier(problem, config),
        Algorithm::FixedPoint => run_fixed_point(problem, config),
    }
}

/// Relative residuals of the full discrete system at `state`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SystemResiduals {
    pub momentum: f64,
    pub constitutive: f64,
    /// Divergence residual after removing the constant pressure mode.
    pub divergence: f64,
}

pub fn system_residuals(problem: &FlowProblem<'_>, state: &FlowState) -> SystemResiduals {
    use crate::assembly::{assemble_convection, ConvectionMode, ConvectionOutput};
    use crate::sparse::norm;
    let disc = problem.disc;
    let ConstitutiveModel { alpha, gamma } = problem.model;

    let visc: Vec<f64> = disc.viscous_residual(&state.u).iter().map(|v| v / alpha).collect();
    let ConvectionOutput::Residual(conv) = assemble_convection(disc, &state.u, ConvectionMode::Residual) else {
        unreachable!("residual mode returns a vector")
    };
    let grad_p = disc.gradient_action(&state.p);
    let rhs = problem.momentum_rhs(&state.t);
    let mom: Vec<f64> = (0..visc.len()).map(|i| visc[i] + conv[i] + grad_p[i] - rhs[i]).collect();
    let momentum = norm(&mom) / (norm(&visc) + norm(&conv) + norm(&grad_p) + norm(&rhs)).max(f64::MIN_POSITIVE);

    let strain = strain_moments(disc, &state.u);
    let elem = &disc.kernel.stress;
    let (num, den) = (0..disc.n_elements())
        .into_par_iter()
        .map(|e| {
            let te = FlowProblem::block_array(&state.t, e);
            let mut r = elem.mass_apply(&te);
            let nl = elem.flux_moments(&te, false).moments;
            let mut data = [0.0; NT];
            for i in 0..NT {
                data[i] = strain[NT * e + i] + problem.g_moments[NT * e + i];
                r[i] = alpha * r[i] + gamma * nl[i] - data[i];
            }
            (elem.dual_norm(&r).powi(2), elem.dual_norm(&data).powi(2))
        })
        .reduce(|| (0.0, 0.0), |a, b| (a.0 + b.0, a.1 + b.1));
    let constitutive = num.sqrt() / den.sqrt().max(f64::MIN_POSITIVE);

    let mut div = disc.divergence_action(&state.u);
    super::schur::remove_mean(&mut div);
    let dual = disc.pressure_mass_lu.solve(&div);
    let div_norm = crate::sparse::dot(&div, &dual).max(0.0).sqrt();
    let divergence = div_norm / disc.velocity_grad_norm(&state.u).max(f64::MIN_POSITIVE);
    SystemResiduals { momentum, constitutive, divergence }
}
