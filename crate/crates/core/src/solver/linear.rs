//! Sparse direct solves for the Newton systems.

use faer::prelude::*;
use faer::sparse::linalg::solvers::{Lu, SymbolicLu};
use faer::sparse::{SparseColMat, Triplet};
use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Target for `|J d + r| / |r|` after refinement.
pub const LINEAR_RESIDUAL_TARGET: f64 = 1e-12;
/// Solves whose relative residual stays above this are rejected.
pub const LINEAR_RESIDUAL_LIMIT: f64 = 1e-8;
const REFINEMENT_STEPS: usize = 4;

/// Square sparse matrix in compressed-column form with a right-hand side.
pub struct SparseSystem {
    pub matrix: SparseColMat<usize, f64>,
    pub rhs: Vec<f64>,
}

impl SparseSystem {
    /// Duplicate entries are summed.
    pub fn from_triplets(
        dim: usize,
        entries: &[(usize, usize, f64)],
        rhs: Vec<f64>,
    ) -> Result<Self> {
        if rhs.len() != dim {
            return Err(Error::Shape {
                expected: dim,
                found: rhs.len(),
            });
        }
        let triplets: Vec<Triplet<usize, usize, f64>> = entries
            .iter()
            .map(|&(r, c, v)| Triplet::new(r, c, v))
            .collect();
        let matrix = SparseColMat::try_new_from_triplets(dim, dim, &triplets)
            .map_err(|e| Error::Solver(format!("invalid sparse structure: {e:?}")))?;
        Ok(Self { matrix, rhs })
    }

    pub fn dimension(&self) -> usize {
        self.rhs.len()
    }

    /// Stored entries of one row as `(column, value)` pairs.
    pub fn row_entries(&self, row: usize) -> Vec<(usize, f64)> {
        let m = self.matrix.as_ref();
        let mut out = Vec::new();
        for col in 0..m.ncols() {
            let rows = m.row_idx_of_col_raw(col);
            let vals = m.val_of_col(col);
            for (&r, &v) in rows.iter().zip(vals) {
                if r == row {
                    out.push((col, v));
                }
            }
        }
        out
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let n = self.dimension();
        let m = self.matrix.as_ref();
        let mut d = DMatrix::zeros(n, n);
        for col in 0..n {
            for (&r, &v) in m.row_idx_of_col_raw(col).iter().zip(m.val_of_col(col)) {
                d[(r, col)] += v;
            }
        }
        d
    }

    /// `A x` for the stored matrix.
    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let m = self.matrix.as_ref();
        let mut y = vec![0.0; self.dimension()];
        for (col, &xc) in x.iter().enumerate() {
            for (&r, &v) in m.row_idx_of_col_raw(col).iter().zip(m.val_of_col(col)) {
                y[r] += v * xc;
            }
        }
        y
    }

    fn empty_row(&self) -> Option<usize> {
        let m = self.matrix.as_ref();
        let mut seen = vec![false; self.dimension()];
        for col in 0..m.ncols() {
            for &r in m.row_idx_of_col_raw(col) {
                seen[r] = true;
            }
        }
        seen.iter().position(|s| !s)
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Sparse LU solver that keeps the symbolic factorization while the
/// sparsity pattern stays the same.
#[derive(Default)]
pub struct LinearSolver {
    cached: Option<(Vec<usize>, Vec<usize>, SymbolicLu<usize>)>,
}

impl LinearSolver {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn solve(&mut self, system: &SparseSystem) -> Result<Vec<f64>> {
        let n = system.dimension();
        if let Some(row) = system.empty_row() {
            return Err(Error::Solver(format!(
                "row {row} of the {n}x{n} system is empty"
            )));
        }
        let a = system.matrix.as_ref();
        let sym = a.symbolic();
        let col_ptr = sym.col_ptr();
        let row_idx = sym.row_idx();
        let reuse = matches!(&self.cached, Some((c, r, _)) if c == col_ptr && r == row_idx);
        if !reuse {
            let symbolic = SymbolicLu::try_new(sym)
                .map_err(|e| Error::Solver(format!("symbolic factorization failed: {e:?}")))?;
            self.cached = Some((col_ptr.to_vec(), row_idx.to_vec(), symbolic));
        }
        let symbolic = self
            .cached
            .as_ref()
            .map(|(_, _, s)| s.clone())
            .expect("cached above");
        let lu = Lu::try_new_with_symbolic(symbolic, a)
            .map_err(|e| Error::Solver(format!("numeric factorization failed: {e:?}")))?;

        refined_solve(&lu, |x| system.apply(x), &system.rhs)
    }
}

/// Solves with `lu` and refines until the relative residual reaches
/// [`LINEAR_RESIDUAL_TARGET`]; fails above [`LINEAR_RESIDUAL_LIMIT`].
pub(crate) fn refined_solve(
    lu: &Lu<usize, f64>,
    apply: impl Fn(&[f64]) -> Vec<f64>,
    rhs: &[f64],
) -> Result<Vec<f64>> {
    let n = rhs.len();
    let rhs_norm = norm(rhs);
    if rhs_norm == 0.0 {
        return Ok(vec![0.0; n]);
    }
    let mut x = vec![0.0; n];
    let mut residual = rhs.to_vec();
    let mut rel = 1.0;
    for _ in 0..=REFINEMENT_STEPS {
        let r = Col::<f64>::from_fn(n, |i| residual[i]);
        let d = lu.solve(&r);
        for (i, xi) in x.iter_mut().enumerate() {
            *xi += d[i];
        }
        if !x.iter().all(|v| v.is_finite()) {
            return Err(Error::Solver(
                "factorization produced non-finite values; the matrix is numerically singular"
                    .into(),
            ));
        }
        let ax = apply(&x);
        residual = rhs.iter().zip(&ax).map(|(b, y)| b - y).collect();
        rel = norm(&residual) / rhs_norm;
        if rel <= LINEAR_RESIDUAL_TARGET {
            return Ok(x);
        }
    }
    if rel <= LINEAR_RESIDUAL_LIMIT {
        Ok(x)
    } else {
        Err(Error::Solver(format!(
            "relative linear residual {rel:e} after refinement; the matrix is numerically rank deficient"
        )))
    }
}

/// One-off solve of `A x = b`.
pub fn solve_sparse(system: &SparseSystem) -> Result<Vec<f64>> {
    LinearSolver::new().solve(system)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn identity_returns_rhs() {
        let entries: Vec<_> = (0..5).map(|i| (i, i, 1.0)).collect();
        let b = vec![1.0, -2.0, 3.5, 0.0, 7.0];
        let s = SparseSystem::from_triplets(5, &entries, b.clone()).unwrap();
        assert_eq!(solve_sparse(&s).unwrap(), b);
    }

    #[test]
    fn matches_dense_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n = 70;
        let mut entries = Vec::new();
        for i in 0..n {
            entries.push((i, i, 10.0 + rng.random_range(0.0..1.0)));
            for _ in 0..4 {
                entries.push((i, rng.random_range(0..n), rng.random_range(-1.0..1.0)));
            }
        }
        let b: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let s = SparseSystem::from_triplets(n, &entries, b.clone()).unwrap();
        let x = solve_sparse(&s).unwrap();
        let dense = s
            .to_dense()
            .lu()
            .solve(&nalgebra::DVector::from_vec(b))
            .unwrap();
        for (a, d) in x.iter().zip(dense.iter()) {
            assert!((a - d).abs() < 1e-10);
        }
    }

    #[test]
    fn empty_row_is_rejected() {
        let entries = vec![(0, 0, 1.0), (0, 1, 1.0), (2, 2, 1.0)];
        let s = SparseSystem::from_triplets(3, &entries, vec![1.0; 3]).unwrap();
        assert!(matches!(solve_sparse(&s), Err(Error::Solver(_))));
    }

    #[test]
    fn numerically_singular_is_rejected() {
        let entries = vec![(0, 0, 1.0), (0, 1, 2.0), (1, 0, 2.0), (1, 1, 4.0)];
        let s = SparseSystem::from_triplets(2, &entries, vec![1.0, 0.0]).unwrap();
        assert!(matches!(solve_sparse(&s), Err(Error::Solver(_))));
    }

    #[test]
    fn cached_symbolic_is_reused_across_values() {
        let mut solver = LinearSolver::new();
        for scale in [1.0, 3.0] {
            let entries = vec![(0, 0, 2.0 * scale), (1, 1, scale), (0, 1, 1.0)];
            let s = SparseSystem::from_triplets(2, &entries, vec![3.0, 1.0]).unwrap();
            let x = solver.solve(&s).unwrap();
            let r: Vec<f64> = s.apply(&x).iter().zip(&s.rhs).map(|(a, b)| a - b).collect();
            assert!(norm(&r) < 1e-14);
        }
    }

    #[test]
    fn row_entries_lists_stored_columns() {
        let entries = vec![
            (0, 0, 1.0),
            (1, 0, 4.0),
            (1, 2, 5.0),
            (2, 2, 1.0),
            (1, 1, 1.0),
        ];
        let s = SparseSystem::from_triplets(3, &entries, vec![0.0; 3]).unwrap();
        let mut cols: Vec<usize> = s.row_entries(1).into_iter().map(|(c, _)| c).collect();
        cols.sort();
        assert_eq!(cols, vec![0, 1, 2]);
    }
}
