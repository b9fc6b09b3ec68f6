//! Mixed finite elements for steady incompressible flow with the implicit
//! constitutive relation `D(u) = alpha T + gamma mu(|T|) T`.
//!
//! Velocity is continuous Q2, pressure continuous Q1 and the stress
//! discontinuous Q2 on uniform square meshes. The discrete problem is solved
//! either by a Lions–Mercier splitting or by a fixed-point iteration; both
//! alternate Navier–Stokes Newton solves with element-local stress solves.
//!
//! ```no_run
//! use mixedflow::prelude::*;
//!
//! let model = ConstitutiveModel::new(1.0, 1.0)?;
//! let case = ManufacturedCase::new(CaseId::Case1, model);
//! let mesh = build_mesh(MeshSpec::new(case.domain(), 3)?);
//! let disc = Discretization::new(mesh)?;
//! let problem = FlowProblem::manufactured(&disc, &case);
//! let (state, trace) = run_lions_mercier(&problem, &SolverConfig::default())?;
//! let errors = compute_errors(&disc, &state, &case)?;
//! println!("{} iterations, {errors:?}", trace.iterations());
//! # Ok::<(), mixedflow::Error>(())
//! ```

// `!(x > 0.0)` is used on purpose so that NaN is rejected
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod assembly;
pub mod basis;
pub mod constitutive;
pub mod dofs;
pub mod manufactured;
pub mod mesh;
pub mod norms;
pub mod solvers;
pub mod sparse;
pub mod tensor;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Mesh(#[from] mesh::MeshError),
    #[error(transparent)]
    Basis(#[from] basis::BasisError),
    #[error(transparent)]
    Linalg(#[from] sparse::LinalgError),
    #[error(transparent)]
    Constitutive(#[from] constitutive::ConstitutiveError),
    #[error(transparent)]
    Manufactured(#[from] manufactured::ManufacturedError),
    #[error(transparent)]
    Norm(#[from] norms::NormError),
    #[error(transparent)]
    Solver(#[from] solvers::SolverError),
}

pub use assembly::Discretization;
pub use constitutive::ConstitutiveModel;
pub use dofs::{DirichletData, SystemSpaces};
pub use manufactured::{CaseId, ManufacturedCase};
pub use mesh::{build_mesh, Domain, MeshSpec, QuadMesh};
pub use norms::{compute_errors, convergence_rate, ErrorTriple};
pub use solvers::{
    outer_metric, run_fixed_point, run_lions_mercier, Algorithm, FlowProblem, FlowState, OuterTrace, SolverConfig,
};
pub use tensor::SymTensor;

pub mod prelude {
    pub use crate::{
        build_mesh, compute_errors, convergence_rate, run_fixed_point, run_lions_mercier, Algorithm, CaseId,
        ConstitutiveModel, Discretization, Domain, ErrorTriple, FlowProblem, FlowState, ManufacturedCase, MeshSpec,
        OuterTrace, SolverConfig,
    };
}
