//! Shared fixtures for the benchmarks.

use mixedflow::prelude::*;

/// Discretization and Case 1 problem data at `level` with `alpha = gamma = 1`.
pub fn case1(level: u32) -> (Discretization, ManufacturedCase) {
    let case = ManufacturedCase::new(CaseId::Case1, ConstitutiveModel::new(1.0, 1.0).expect("valid model"));
    let mesh = build_mesh(MeshSpec::new(case.domain(), level).expect("valid level"));
    (Discretization::new(mesh).expect("nonsingular pressure mass"), case)
}
