//! Square sparse linear systems: sparse LU for moderate sizes, restarted
//! GMRES with an ILU(0) preconditioner beyond that.

use alloc::vec;
use alloc::vec::Vec;

use faer::sparse::linalg::solvers::Lu;
use faer::sparse::{SparseColMat, Triplet};
use faer::prelude::Solve;

use crate::math::norm2;
use crate::sparse::SparseOperator;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SolveMethod {
    Direct,
    Gmres,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SolverOptions {
    /// Systems with at most this many unknowns are factorised directly.
    pub direct_max_dofs: usize,
    /// Relative residual target of the Krylov iteration.
    pub krylov_tol: f64,
    pub restart: usize,
    pub max_iterations: usize,
    /// Accepted relative residual `||A x - b|| / ||b||` of any solve.
    pub verify_tol: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self { direct_max_dofs: 200_000, krylov_tol: 1e-10, restart: 60, max_iterations: 3000, verify_tol: 1e-8 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SolveReport {
    pub method: SolveMethod,
    /// Krylov iterations; 0 for direct solves.
    pub iterations: usize,
    pub relative_residual: f64,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum LinearSolveError {
    #[error("matrix must be square (got {rows}x{cols})")]
    NotSquare { rows: usize, cols: usize },
    #[error("sparse LU factorisation failed")]
    Factorization,
    #[error("{method:?} solve left relative residual {relative_residual:e} after {iterations} iterations")]
    NotConverged { method: SolveMethod, iterations: usize, relative_residual: f64 },
}

/// Sparse LU factors of a square matrix.
pub struct DirectFactor {
    n: usize,
    lu: Lu<usize, f64>,
}

impl core::fmt::Debug for DirectFactor {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.debug_struct("DirectFactor").field("n", &self.n).finish_non_exhaustive()
    }
}

impl DirectFactor {
    pub fn new(a: &SparseOperator) -> Result<Self, LinearSolveError> {
        if a.rows() != a.cols() {
            return Err(LinearSolveError::NotSquare { rows: a.rows(), cols: a.cols() });
        }
        let t: Vec<Triplet<usize, usize, f64>> =
            a.triplets().into_iter().map(|(r, c, v)| Triplet::new(r, c, v)).collect();
        let m = SparseColMat::<usize, f64>::try_new_from_triplets(a.rows(), a.cols(), &t)
            .map_err(|_| LinearSolveError::Factorization)?;
        let lu = m.sp_lu().map_err(|_| LinearSolveError::Factorization)?;
        Ok(Self { n: a.rows(), lu })
    }

    /// Solution of `A x = b`. Singular factors show up as non-finite entries.
    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        assert_eq!(b.len(), self.n);
        let rhs = faer::Col::<f64>::from_fn(self.n, |i| b[i]);
        let x = self.lu.solve(&rhs);
        (0..self.n).map(|i| x[i]).collect()
    }
}

/// Incomplete LU factorisation with the sparsity pattern of `A`.
#[derive(Clone, Debug)]
pub struct Ilu0 {
    n: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    values: Vec<f64>,
    diag: Vec<usize>,
}

impl Ilu0 {
    pub fn new(a: &SparseOperator) -> Self {
        let n = a.rows();
        let mut indptr = vec![0];
        let mut indices = Vec::with_capacity(a.nnz() + n);
        let mut values = Vec::with_capacity(a.nnz() + n);
        let mut diag = vec![0; n];
        for r in 0..n {
            let (cols, vals) = a.row(r);
            let mut has_diag = false;
            for (&c, &v) in cols.iter().zip(vals) {
                if c == r {
                    has_diag = true;
                } else if c > r && !has_diag {
                    // Keep a structural diagonal so the factor is defined.
                    diag[r] = indices.len();
                    indices.push(r);
                    values.push(0.0);
                    has_diag = true;
                }
                if c == r {
                    diag[r] = indices.len();
                }
                indices.push(c);
                values.push(v);
            }
            if !has_diag {
                diag[r] = indices.len();
                indices.push(r);
                values.push(0.0);
            }
            indptr.push(indices.len());
        }
        let scale = values.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1.0);
        let mut pos = vec![usize::MAX; n];
        for i in 0..n {
            let (s, e) = (indptr[i], indptr[i + 1]);
            for k in s..e {
                pos[indices[k]] = k;
            }
            for k in s..e {
                let col = indices[k];
                if col >= i {
                    break;
                }
                let factor = values[k] / values[diag[col]];
                values[k] = factor;
                for kk in diag[col] + 1..indptr[col + 1] {
                    let p = pos[indices[kk]];
                    if p != usize::MAX {
                        values[p] -= factor * values[kk];
                    }
                }
            }
            if values[diag[i]].abs() < 1e-14 * scale {
                values[diag[i]] = if values[diag[i]] < 0.0 { -1e-14 * scale } else { 1e-14 * scale };
            }
            for k in s..e {
                pos[indices[k]] = usize::MAX;
            }
        }
        Self { n, indptr, indices, values, diag }
    }

    /// Applies `(LU)^-1` in place.
    pub fn apply(&self, x: &mut [f64]) {
        for i in 0..self.n {
            let mut acc = x[i];
            for k in self.indptr[i]..self.diag[i] {
                acc -= self.values[k] * x[self.indices[k]];
            }
            x[i] = acc;
        }
        for i in (0..self.n).rev() {
            let mut acc = x[i];
            for k in self.diag[i] + 1..self.indptr[i + 1] {
                acc -= self.values[k] * x[self.indices[k]];
            }
            x[i] = acc / self.values[self.diag[i]];
        }
    }
}

/// Right-preconditioned restarted GMRES. Returns the iterate, the number of
/// inner iterations and the final relative residual.
pub fn gmres(a: &SparseOperator, b: &[f64], precond: &Ilu0, opts: &SolverOptions) -> (Vec<f64>, usize, f64) {
    let n = b.len();
    let bnorm = norm2(b);
    let mut x = vec![0.0; n];
    if bnorm == 0.0 {
        return (x, 0, 0.0);
    }
    let m = opts.restart.max(1);
    let mut total = 0;
    while total < opts.max_iterations {
        let ax = a.apply(&x);
        let r: Vec<f64> = b.iter().zip(&ax).map(|(b, a)| b - a).collect();
        let beta = norm2(&r);
        if beta / bnorm <= opts.krylov_tol {
            break;
        }
        let mut basis: Vec<Vec<f64>> = vec![r.iter().map(|v| v / beta).collect()];
        let mut hess: Vec<Vec<f64>> = Vec::new();
        let mut cs: Vec<f64> = Vec::new();
        let mut sn: Vec<f64> = Vec::new();
        let mut g = vec![beta];
        let mut k = 0;
        while k < m && total < opts.max_iterations {
            let mut z = basis[k].clone();
            precond.apply(&mut z);
            let mut w = a.apply(&z);
            let mut h = vec![0.0; k + 2];
            for (j, v) in basis.iter().enumerate() {
                let d: f64 = w.iter().zip(v).map(|(a, b)| a * b).sum();
                h[j] = d;
                w.iter_mut().zip(v).for_each(|(a, b)| *a -= d * b);
            }
            let wn = norm2(&w);
            h[k + 1] = wn;
            for j in 0..k {
                let t = cs[j] * h[j] + sn[j] * h[j + 1];
                h[j + 1] = -sn[j] * h[j] + cs[j] * h[j + 1];
                h[j] = t;
            }
            let denom = crate::math::hypot(h[k], h[k + 1]);
            let (c, s) = if denom == 0.0 { (1.0, 0.0) } else { (h[k] / denom, h[k + 1] / denom) };
            h[k] = denom;
            h[k + 1] = 0.0;
            cs.push(c);
            sn.push(s);
            g.push(-s * g[k]);
            g[k] *= c;
            hess.push(h);
            k += 1;
            total += 1;
            if (g[k].abs() / bnorm) <= opts.krylov_tol || wn == 0.0 {
                break;
            }
            basis.push(w.iter().map(|v| v / wn).collect());
        }
        let mut y = vec![0.0; k];
        for i in (0..k).rev() {
            let mut acc = g[i];
            for j in i + 1..k {
                acc -= hess[j][i] * y[j];
            }
            y[i] = acc / hess[i][i];
        }
        let mut update = vec![0.0; n];
        for (j, yj) in y.iter().enumerate() {
            update.iter_mut().zip(&basis[j]).for_each(|(u, v)| *u += yj * v);
        }
        precond.apply(&mut update);
        x.iter_mut().zip(&update).for_each(|(x, u)| *x += u);
    }
    let ax = a.apply(&x);
    let res: Vec<f64> = b.iter().zip(&ax).map(|(b, a)| b - a).collect();
    (x, total, norm2(&res) / bnorm)
}

/// Relative residual `||A x - b|| / ||b||` (absolute when `b = 0`).
pub fn relative_residual(a: &SparseOperator, x: &[f64], b: &[f64]) -> f64 {
    let ax = a.apply(x);
    let r: Vec<f64> = ax.iter().zip(b).map(|(a, b)| a - b).collect();
    let bn = norm2(b);
    let rn = norm2(&r);
    if bn > 0.0 { rn / bn } else { rn }
}

const REFINEMENT_STEPS: usize = 5;

/// Solves `A x = b`, choosing the method by size, and verifies the result.
/// Inaccurate direct solves are refined and, failing that, corrected by
/// GMRES.
pub fn solve(a: &SparseOperator, b: &[f64], opts: &SolverOptions) -> Result<(Vec<f64>, SolveReport), LinearSolveError> {
    if a.rows() != a.cols() {
        return Err(LinearSolveError::NotSquare { rows: a.rows(), cols: a.cols() });
    }
    let residual_of = |x: &[f64]| {
        if x.iter().all(|v| v.is_finite()) { relative_residual(a, x, b) } else { f64::INFINITY }
    };
    let (mut x, mut method, mut iterations) = if a.rows() <= opts.direct_max_dofs {
        let lu = DirectFactor::new(a)?;
        let mut x = lu.solve(b);
        // Iterative refinement for ill-conditioned factors.
        for _ in 0..REFINEMENT_STEPS {
            if !(residual_of(&x) > opts.verify_tol) || !x.iter().all(|v| v.is_finite()) {
                break;
            }
            let r: Vec<f64> = b.iter().zip(a.apply(&x)).map(|(b, ax)| b - ax).collect();
            let dx = lu.solve(&r);
            let trial: Vec<f64> = x.iter().zip(&dx).map(|(x, d)| x + d).collect();
            if residual_of(&trial) >= residual_of(&x) {
                break;
            }
            x = trial;
        }
        (x, SolveMethod::Direct, 0)
    } else {
        let ilu = Ilu0::new(a);
        let (x, it, _) = gmres(a, b, &ilu, opts);
        (x, SolveMethod::Gmres, it)
    };
    if method == SolveMethod::Direct && !(residual_of(&x) <= opts.verify_tol) {
        // Krylov correction on the residual equation.
        let start = if x.iter().all(|v| v.is_finite()) { x.clone() } else { alloc::vec![0.0; b.len()] };
        let r: Vec<f64> = b.iter().zip(a.apply(&start)).map(|(b, ax)| b - ax).collect();
        let ilu = Ilu0::new(a);
        let (dx, it, _) = gmres(a, &r, &ilu, opts);
        let trial: Vec<f64> = start.iter().zip(&dx).map(|(x, d)| x + d).collect();
        if residual_of(&trial) < residual_of(&x) {
            x = trial;
            method = SolveMethod::Gmres;
            iterations = it;
        }
    }
    let rel = residual_of(&x);
    if !(rel <= opts.verify_tol) {
        return Err(LinearSolveError::NotConverged { method, iterations, relative_residual: rel });
    }
    Ok((x, SolveReport { method, iterations, relative_residual: rel }))
}
