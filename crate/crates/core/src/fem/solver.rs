use faer::linalg::solvers::Solve;
use faer::sparse::linalg::solvers::Llt;
use faer::{Mat, Side};
use rayon::prelude::*;

use super::CsrMatrix;
use crate::error::{Error, Result};

/// Dimension above which the conjugate-gradient fallback replaces the
/// direct factorization.
pub const DIRECT_SOLVER_LIMIT: usize = 200_000;

/// Relative residual tolerance of the conjugate-gradient fallback.
pub const CG_TOLERANCE: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SolverStrategy {
    Auto,
    Direct,
    ConjugateGradient,
}

enum Backend {
    Empty,
    Cholesky(Llt<usize, f64>),
    Cg(CsrMatrix),
}

/// Factorized symmetric positive definite system.
pub struct SpdSolver {
    n: usize,
    backend: Backend,
}

impl SpdSolver {
    pub fn new(a: &CsrMatrix) -> Result<Self> {
        Self::with_strategy(a, SolverStrategy::Auto)
    }

    pub fn with_strategy(a: &CsrMatrix, strategy: SolverStrategy) -> Result<Self> {
        let n = a.nrows();
        if n != a.ncols() {
            return Err(Error::Solver("matrix is not square".into()));
        }
        if n == 0 {
            return Ok(SpdSolver {
                n,
                backend: Backend::Empty,
            });
        }
        let direct = match strategy {
            SolverStrategy::Auto => n <= DIRECT_SOLVER_LIMIT,
            SolverStrategy::Direct => true,
            SolverStrategy::ConjugateGradient => false,
        };
        let backend = if direct {
            let llt = a
                .to_faer()?
                .sp_cholesky(Side::Lower)
                .map_err(|e| Error::Solver(format!("sparse Cholesky failed: {e:?}")))?;
            Backend::Cholesky(llt)
        } else {
            if (0..n).any(|i| !(a.get(i, i) > 0.0)) {
                return Err(Error::Solver("nonpositive diagonal entry".into()));
            }
            Backend::Cg(a.clone())
        };
        Ok(SpdSolver { n, backend })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>> {
        assert_eq!(b.len(), self.n);
        match &self.backend {
            Backend::Empty => Ok(Vec::new()),
            Backend::Cholesky(llt) => {
                let mut x = Mat::<f64>::from_fn(self.n, 1, |i, _| b[i]);
                llt.solve_in_place(x.as_mut());
                let out: Vec<f64> = (0..self.n).map(|i| x[(i, 0)]).collect();
                if out.iter().any(|v| !v.is_finite()) {
                    return Err(Error::Solver("non-finite solution".into()));
                }
                Ok(out)
            }
            Backend::Cg(a) => conjugate_gradient(a, b),
        }
    }

    /// Solves for every column of `b`, in parallel over column blocks.
    pub fn solve_mat(&self, b: &Mat<f64>) -> Result<Mat<f64>> {
        assert_eq!(b.nrows(), self.n);
        const BLOCK: usize = 64;
        let ncols = b.ncols();
        let blocks: Vec<(usize, usize)> = (0..ncols)
            .step_by(BLOCK)
            .map(|s| (s, (s + BLOCK).min(ncols)))
            .collect();
        let solved: Vec<Mat<f64>> = blocks
            .par_iter()
            .map(|&(s, e)| -> Result<Mat<f64>> {
                let mut x = Mat::<f64>::from_fn(self.n, e - s, |i, j| b[(i, s + j)]);
                match &self.backend {
                    Backend::Empty => {}
                    Backend::Cholesky(llt) => llt.solve_in_place(x.as_mut()),
                    Backend::Cg(a) => {
                        for j in 0..e - s {
                            let col: Vec<f64> = (0..self.n).map(|i| x[(i, j)]).collect();
                            let sol = conjugate_gradient(a, &col)?;
                            for i in 0..self.n {
                                x[(i, j)] = sol[i];
                            }
                        }
                    }
                }
                Ok(x)
            })
            .collect::<Result<_>>()?;
        let mut out = Mat::<f64>::zeros(self.n, ncols);
        for (&(s, e), x) in blocks.iter().zip(&solved) {
            for j in 0..e - s {
                for i in 0..self.n {
                    out[(i, s + j)] = x[(i, j)];
                }
            }
        }
        if (0..ncols).any(|j| (0..self.n).any(|i| !out[(i, j)].is_finite())) {
            return Err(Error::Solver("non-finite solution".into()));
        }
        Ok(out)
    }
}

/// Jacobi-preconditioned conjugate gradient to relative residual
/// [`CG_TOLERANCE`].
fn conjugate_gradient(a: &CsrMatrix, b: &[f64]) -> Result<Vec<f64>> {
    let n = b.len();
    let dot = |x: &[f64], y: &[f64]| x.iter().zip(y).map(|(a, b)| a * b).sum::<f64>();
    let inv_diag: Vec<f64> = (0..n).map(|i| 1.0 / a.get(i, i)).collect();
    let bnorm = dot(b, b).sqrt();
    let mut x = vec![0.0; n];
    if bnorm == 0.0 {
        return Ok(x);
    }
    let mut r = b.to_vec();
    let mut z: Vec<f64> = r.iter().zip(&inv_diag).map(|(r, d)| r * d).collect();
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let max_iter = 10 * n + 100;
    for _ in 0..max_iter {
        let ap = a.mul_vec(&p);
        let pap = dot(&p, &ap);
        if !(pap > 0.0) {
            return Err(Error::Solver("matrix is not positive definite".into()));
        }
        let alpha = rz / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        if dot(&r, &r).sqrt() <= CG_TOLERANCE * bnorm {
            return Ok(x);
        }
        for i in 0..n {
            z[i] = r[i] * inv_diag[i];
        }
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    Err(Error::Iteration(format!("conjugate gradient did not converge in {max_iter} steps")))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn laplacian_1d(n: usize) -> CsrMatrix {
        let mut t = Vec::new();
        for i in 0..n {
            t.push((i, i, 2.0));
            if i + 1 < n {
                t.push((i, i + 1, -1.0));
                t.push((i + 1, i, -1.0));
            }
        }
        CsrMatrix::from_triplets(n, n, t)
    }

    #[test]
    fn direct_and_cg_agree() {
        let a = laplacian_1d(50);
        let b: Vec<f64> = (0..50).map(|i| (i as f64 * 0.3).sin()).collect();
        let x1 = SpdSolver::with_strategy(&a, SolverStrategy::Direct).unwrap().solve(&b).unwrap();
        let x2 = SpdSolver::with_strategy(&a, SolverStrategy::ConjugateGradient)
            .unwrap()
            .solve(&b)
            .unwrap();
        let r = a.mul_vec(&x1);
        for i in 0..50 {
            assert!((r[i] - b[i]).abs() < 1e-12);
            assert!((x1[i] - x2[i]).abs() < 1e-9);
        }
    }

    #[test]
    fn multiple_right_hand_sides() {
        let a = laplacian_1d(20);
        let b = Mat::<f64>::from_fn(20, 130, |i, j| ((i * 7 + j * 3) % 11) as f64);
        let s = SpdSolver::new(&a).unwrap();
        let x = s.solve_mat(&b).unwrap();
        let col: Vec<f64> = (0..20).map(|i| b[(i, 129)]).collect();
        let xc = s.solve(&col).unwrap();
        for i in 0..20 {
            assert!((x[(i, 129)] - xc[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn indefinite_matrix_is_rejected() {
        let a = laplacian_1d(5).scale(-1.0);
        assert!(matches!(SpdSolver::new(&a), Err(Error::Solver(_))));
    }
}
