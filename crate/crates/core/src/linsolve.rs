//! Linear solvers for the three system shapes of the scheme.
//!
//! SPD systems (mass, pressure Poisson) use Jacobi-preconditioned conjugate
//! gradients. The nonsymmetric momentum system uses a sparse LU
//! factorization from `faer`, with the symbolic analysis cached across
//! steps since the matrix pattern never changes.

use faer::linalg::solvers::Solve;
use faer::sparse::linalg::solvers::{Lu, SymbolicLu};
use faer::sparse::{SparseColMat, Triplet};
use faer::MatRef;
use thiserror::Error;

use crate::assembly::SparseMatrix;

#[derive(Debug, Error)]
pub enum SolveError {
    #[error("conjugate gradients did not converge in {iterations} iterations (relative residual {residual:e})")]
    NotConverged { iterations: usize, residual: f64 },
    #[error("matrix is not square or does not match rhs ({rows}x{cols}, rhs {rhs})")]
    Shape { rows: usize, cols: usize, rhs: usize },
    #[error("sparse LU factorization failed: {0}")]
    Factorization(String),
    #[error("solution residual {residual:e} exceeds tolerance {tol:e}")]
    Residual { residual: f64, tol: f64 },
    #[error("non-finite values in system")]
    NonFinite,
}

#[derive(Debug, Clone)]
pub struct Solution {
    pub x: Vec<f64>,
    pub iterations: usize,
    /// `||A x - b|| / ||b||`, recomputed after the solve.
    pub residual: f64,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub fn relative_residual(a: &SparseMatrix, x: &[f64], b: &[f64]) -> f64 {
    let ax = a.mul_vec(x);
    let r: Vec<f64> = ax.iter().zip(b).map(|(p, q)| q - p).collect();
    let nb = norm(b);
    if nb == 0.0 {
        norm(&r)
    } else {
        norm(&r) / nb
    }
}

fn check_shape(a: &SparseMatrix, rhs: &[f64]) -> Result<(), SolveError> {
    if a.nrows() != a.ncols() || a.nrows() != rhs.len() {
        return Err(SolveError::Shape {
            rows: a.nrows(),
            cols: a.ncols(),
            rhs: rhs.len(),
        });
    }
    if !rhs.iter().all(|v| v.is_finite()) || !a.is_finite() {
        return Err(SolveError::NonFinite);
    }
    Ok(())
}

/// One pass of Jacobi-preconditioned CG from `x`, stopping on the
/// recursive residual. Returns the iteration count.
fn pcg(a: &SparseMatrix, b: &[f64], x: &mut [f64], inv_diag: &[f64], tol_abs: f64, cap: usize) -> usize {
    let ax = a.mul_vec(x);
    let mut r: Vec<f64> = b.iter().zip(&ax).map(|(p, q)| p - q).collect();
    let mut z: Vec<f64> = r.iter().zip(inv_diag).map(|(p, d)| p * d).collect();
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    for it in 0..cap {
        if norm(&r) <= tol_abs {
            return it;
        }
        let ap = a.mul_vec(&p);
        let pap = dot(&p, &ap);
        if pap <= 0.0 {
            return it;
        }
        let alpha = rz / pap;
        for i in 0..x.len() {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        for i in 0..z.len() {
            z[i] = r[i] * inv_diag[i];
        }
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..p.len() {
            p[i] = z[i] + beta * p[i];
        }
    }
    cap
}

/// Solve a symmetric positive (semi-)definite system by conjugate gradients.
///
/// With `zero_mean = Some(mass)` the matrix is assumed to have the constant
/// vector as kernel: the rhs is projected onto the range and the solution
/// shifted so that the represented function has zero mean, `1^T M x = 0`.
pub fn solve_spd(
    a: &SparseMatrix,
    rhs: &[f64],
    zero_mean: Option<&SparseMatrix>,
    tol: f64,
) -> Result<Solution, SolveError> {
    check_shape(a, rhs)?;
    let n = rhs.len();
    let mut b = rhs.to_vec();
    if zero_mean.is_some() && n > 0 {
        let mean = b.iter().sum::<f64>() / n as f64;
        b.iter_mut().for_each(|v| *v -= mean);
    }
    let nb = norm(&b);
    let mut x = vec![0.0; n];
    if nb == 0.0 {
        return Ok(Solution {
            x,
            iterations: 0,
            residual: 0.0,
        });
    }
    let inv_diag: Vec<f64> = a
        .diagonal()
        .iter()
        .map(|&d| if d > 0.0 { 1.0 / d } else { 1.0 })
        .collect();
    let cap = 10 * n.max(1);
    let mut iterations = 0;
    let mut residual = f64::INFINITY;
    // restarts recover from drift between recursive and true residual
    for _ in 0..4 {
        let remaining = cap.saturating_sub(iterations);
        if remaining == 0 {
            break;
        }
        iterations += pcg(a, &b, &mut x, &inv_diag, 0.5 * tol * nb, remaining);
        residual = relative_residual(a, &x, &b);
        if residual <= tol {
            break;
        }
    }
    if let Some(m) = zero_mean {
        let ones = vec![1.0; n];
        let m1 = m.mul_vec(&ones);
        let shift = dot(&m1, &x) / dot(&m1, &ones);
        x.iter_mut().for_each(|v| *v -= shift);
        residual = relative_residual(a, &x, &b);
    }
    if residual > tol {
        return Err(SolveError::NotConverged { iterations, residual });
    }
    Ok(Solution {
        x,
        iterations,
        residual,
    })
}

fn to_faer(a: &SparseMatrix) -> Result<SparseColMat<usize, f64>, SolveError> {
    let trip: Vec<Triplet<usize, usize, f64>> = (0..a.nrows())
        .flat_map(|i| a.row(i).map(move |(j, v)| Triplet::new(i, j, v)))
        .collect();
    SparseColMat::try_new_from_triplets(a.nrows(), a.ncols(), &trip)
        .map_err(|e| SolveError::Factorization(format!("{e:?}")))
}

/// Sparse direct solver for the nonsymmetric momentum system.
///
/// Keeps the symbolic factorization of the last pattern it saw and reuses
/// it while the pattern stays the same.
#[derive(Default)]
pub struct MomentumSolver {
    cached: Option<(SparseMatrix, SymbolicLu<usize>)>,
}

impl MomentumSolver {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn solve(&mut self, a: &SparseMatrix, rhs: &[f64], tol: f64) -> Result<Solution, SolveError> {
        check_shape(a, rhs)?;
        let n = rhs.len();
        if n == 0 {
            return Ok(Solution {
                x: Vec::new(),
                iterations: 0,
                residual: 0.0,
            });
        }
        let mat = to_faer(a)?;
        let symbolic = match &self.cached {
            Some((pattern, sym)) if pattern.same_pattern(a) => sym.clone(),
            _ => {
                let sym = SymbolicLu::try_new(mat.symbolic())
                    .map_err(|e| SolveError::Factorization(format!("{e:?}")))?;
                self.cached = Some((a.clone(), sym.clone()));
                sym
            }
        };
        // faer panics on an exactly zero pivot instead of returning an error
        let lu = std::panic::catch_unwind(std::panic::AssertUnwindSafe(|| {
            Lu::try_new_with_symbolic(symbolic, mat.as_ref())
        }))
        .map_err(|_| SolveError::Factorization("zero pivot".into()))?
        .map_err(|e| SolveError::Factorization(format!("{e:?}")))?;
        let mut x: Vec<f64> = {
            let sol = lu.solve(MatRef::from_column_major_slice(rhs, n, 1));
            (0..n).map(|i| sol[(i, 0)]).collect()
        };
        let mut residual = relative_residual(a, &x, rhs);
        // one step of iterative refinement if roundoff left us short
        if residual > tol && residual.is_finite() {
            let ax = a.mul_vec(&x);
            let r: Vec<f64> = rhs.iter().zip(&ax).map(|(b, p)| b - p).collect();
            let dx = lu.solve(MatRef::from_column_major_slice(&r, n, 1));
            for (i, xi) in x.iter_mut().enumerate() {
                *xi += dx[(i, 0)];
            }
            residual = relative_residual(a, &x, rhs);
        }
        if !x.iter().all(|v| v.is_finite()) {
            return Err(SolveError::NonFinite);
        }
        if residual > tol {
            return Err(SolveError::Residual { residual, tol });
        }
        Ok(Solution {
            x,
            iterations: 1,
            residual,
        })
    }
}

/// One-shot momentum solve (no symbolic reuse).
pub fn solve_momentum(a: &SparseMatrix, rhs: &[f64], tol: f64) -> Result<Solution, SolveError> {
    MomentumSolver::new().solve(a, rhs, tol)
}

/// Positive-definiteness check through a sparse Cholesky factorization.
pub fn cholesky_check(a: &SparseMatrix) -> bool {
    if a.nrows() != a.ncols() {
        return false;
    }
    match to_faer(a) {
        Ok(m) => m.sp_cholesky(faer::Side::Lower).is_ok(),
        Err(_) => false,
    }
}
