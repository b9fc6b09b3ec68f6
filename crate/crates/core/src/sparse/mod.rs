//! Sparse storage, direct factorization and Krylov solvers.

mod csr;
mod krylov;
mod lu;

pub use csr::{CsrMatrix, TripletBuilder};
pub use krylov::{
    cg, gmres, FnOperator, FnPreconditioner, IdentityPreconditioner, KrylovReport, LinearOperator, Preconditioner,
};
pub(crate) use krylov::{dot, norm};
pub use lu::LuFactorization;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LinalgError {
    #[error("matrix is not square ({rows}x{cols})")]
    NotSquare { rows: usize, cols: usize },
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("structurally singular matrix (no pivot at step {pivot})")]
    StructurallySingular { pivot: usize },
    #[error("numerically singular matrix (non-finite solution component {index})")]
    NumericallySingular { index: usize },
    #[error("Krylov breakdown at iteration {iteration}: {detail}")]
    Breakdown { iteration: usize, detail: String },
    #[error("sparse backend error: {0}")]
    Backend(String),
}
