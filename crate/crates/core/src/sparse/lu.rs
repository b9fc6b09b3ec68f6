use faer::sparse::{SparseColMat, Triplet};
use faer::Mat;

use super::{CsrMatrix, LinalgError};
use faer::linalg::solvers::SolveCore;

/// Sparse LU factorization with partial pivoting and a COLAMD fill-reducing
/// column ordering (supernodal or simplicial, chosen by the backend).
pub struct LuFactorization {
    n: usize,
    lu: faer::sparse::linalg::solvers::Lu<usize, f64>,
}

impl std::fmt::Debug for LuFactorization {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("LuFactorization").field("n", &self.n).finish_non_exhaustive()
    }
}

impl LuFactorization {
    pub fn new(a: &CsrMatrix) -> Result<Self, LinalgError> {
        let n = a.nrows();
        if a.ncols() != n {
            return Err(LinalgError::NotSquare { rows: n, cols: a.ncols() });
        }
        let mut triplets = Vec::with_capacity(a.nnz());
        for i in 0..n {
            for (j, v) in a.row(i) {
                triplets.push(Triplet::new(i, j, v));
            }
        }
        let csc = SparseColMat::<usize, f64>::try_new_from_triplets(n, n, &triplets)
            .map_err(|e| LinalgError::Backend(format!("{e:?}")))?;
        let lu = csc.sp_lu().map_err(|e| match e {
            faer::sparse::linalg::LuError::SymbolicSingular { index } => {
                LinalgError::StructurallySingular { pivot: index }
            }
            other => LinalgError::Backend(format!("{other:?}")),
        })?;
        let fact = Self { n, lu };
        // A zero pivot does not abort the numeric phase; probe for it.
        let probe = fact.solve(&vec![1.0; n]);
        if let Some(index) = probe.iter().position(|v| !v.is_finite()) {
            return Err(LinalgError::NumericallySingular { index });
        }
        Ok(fact)
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let mut x = b.to_vec();
        self.solve_in_place(&mut x);
        x
    }

    pub fn solve_in_place(&self, x: &mut [f64]) {
        assert_eq!(x.len(), self.n);
        let mut rhs = Mat::<f64>::from_fn(self.n, 1, |i, _| x[i]);
        self.lu.solve_in_place_with_conj(faer::Conj::No, rhs.as_mut());
        for (i, xi) in x.iter_mut().enumerate() {
            *xi = rhs[(i, 0)];
        }
    }
}
