//! Sparse symmetric positive-definite solves: CSR storage, sparse Cholesky
//! and Jacobi-preconditioned CG.

use faer::linalg::solvers::Solve;
use faer::sparse::linalg::solvers::Llt;
use faer::sparse::{SparseColMat, Triplet};
use faer::{Col, Side};
use rayon::prelude::*;

use crate::error::{Error, Result};

/// Compressed sparse row matrix with sorted, duplicate-free rows.
#[derive(Clone, Debug, PartialEq)]
pub struct CsrMatrix {
    n: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

impl CsrMatrix {
    /// Square `n x n` matrix from `(row, col, value)` entries; duplicates are summed.
    pub fn from_triplets(n: usize, triplets: &[(usize, usize, f64)]) -> Self {
        let mut counts = vec![0usize; n + 1];
        for &(i, _, _) in triplets {
            counts[i + 1] += 1;
        }
        for i in 0..n {
            counts[i + 1] += counts[i];
        }
        let mut fill = counts.clone();
        let mut cols = vec![0usize; triplets.len()];
        let mut vals = vec![0.0; triplets.len()];
        for &(i, j, v) in triplets {
            cols[fill[i]] = j;
            vals[fill[i]] = v;
            fill[i] += 1;
        }
        let mut row_ptr = Vec::with_capacity(n + 1);
        let mut col_idx = Vec::with_capacity(triplets.len());
        let mut values = Vec::with_capacity(triplets.len());
        row_ptr.push(0);
        let mut order: Vec<usize> = Vec::new();
        for i in 0..n {
            let (lo, hi) = (counts[i], counts[i + 1]);
            order.clear();
            order.extend(lo..hi);
            // stable sort keeps summation order deterministic
            order.sort_by_key(|&k| cols[k]);
            let mut last = usize::MAX;
            for &k in &order {
                if cols[k] == last {
                    *values.last_mut().unwrap() += vals[k];
                } else {
                    col_idx.push(cols[k]);
                    values.push(vals[k]);
                    last = cols[k];
                }
            }
            row_ptr.push(col_idx.len());
        }
        CsrMatrix {
            n,
            row_ptr,
            col_idx,
            values,
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row(&self, i: usize) -> (&[usize], &[f64]) {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        (&self.col_idx[r.clone()], &self.values[r])
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (cols, vals) = self.row(i);
        cols.binary_search(&j).map(|k| vals[k]).unwrap_or(0.0)
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.get(i, i)).collect()
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n];
        self.mul_vec_into(x, &mut y);
        y
    }

    pub fn mul_vec_into(&self, x: &[f64], y: &mut [f64]) {
        y.par_iter_mut().enumerate().for_each(|(i, yi)| {
            let (cols, vals) = self.row(i);
            *yi = cols.iter().zip(vals).map(|(&j, v)| v * x[j]).sum();
        });
    }

    /// `max |A_ij - A_ji|`.
    pub fn max_asymmetry(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for i in 0..self.n {
            let (cols, vals) = self.row(i);
            for (&j, &v) in cols.iter().zip(vals) {
                worst = worst.max((v - self.get(j, i)).abs());
            }
        }
        worst
    }

    /// Quadratic form `x^T A y`.
    pub fn bilinear(&self, x: &[f64], y: &[f64]) -> f64 {
        dot(x, &self.mul_vec(y))
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Sparse Cholesky factor of a symmetric positive-definite matrix, with a
/// fill-reducing ordering chosen by the factorization.
pub struct SparseCholesky {
    llt: Llt<usize, f64>,
}

impl SparseCholesky {
    pub fn factor(a: &CsrMatrix) -> Result<Self> {
        let n = a.n();
        // rows of a symmetric CSR matrix are its columns; keep the lower half
        let mut entries = Vec::with_capacity(a.nnz() / 2 + n);
        for i in 0..n {
            let (cols, vals) = a.row(i);
            for (&j, &v) in cols.iter().zip(vals) {
                if j >= i {
                    entries.push(Triplet::new(j, i, v));
                }
            }
        }
        let m = SparseColMat::<usize, f64>::try_new_from_triplets(n, n, &entries)
            .map_err(|e| Error::Solver(format!("sparse matrix construction: {e:?}")))?;
        let llt = m
            .sp_cholesky(Side::Lower)
            .map_err(|e| Error::Solver(format!("Cholesky factorization failed: {e:?}")))?;
        Ok(SparseCholesky { llt })
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let mut x = Col::<f64>::from_fn(b.len(), |i| b[i]);
        self.llt.solve_in_place(x.as_mut());
        x.iter().copied().collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum SolverKind {
    /// Direct up to `direct_max_unknowns`, CG above.
    Auto,
    Direct,
    Cg,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SolverOptions {
    pub kind: SolverKind,
    pub direct_max_unknowns: usize,
    pub cg_tol: f64,
    pub cg_max_iter: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            kind: SolverKind::Auto,
            direct_max_unknowns: 200_000,
            cg_tol: 1e-12,
            cg_max_iter: 20_000,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SolveStats {
    pub direct: bool,
    pub iterations: usize,
    pub relative_residual: f64,
}

/// Solves `A x = b` for symmetric positive-definite `A`.
pub fn solve_spd(a: &CsrMatrix, b: &[f64], opts: &SolverOptions) -> Result<(Vec<f64>, SolveStats)> {
    if b.len() != a.n() {
        return Err(Error::LengthMismatch {
            expected: a.n(),
            actual: b.len(),
        });
    }
    let bnorm = norm(b);
    if bnorm == 0.0 {
        return Ok((
            vec![0.0; a.n()],
            SolveStats {
                direct: true,
                iterations: 0,
                relative_residual: 0.0,
            },
        ));
    }
    let direct = match opts.kind {
        SolverKind::Cg => false,
        SolverKind::Direct => true,
        SolverKind::Auto => a.n() <= opts.direct_max_unknowns,
    };
    if !direct {
        return pcg(a, b, opts.cg_tol, opts.cg_max_iter);
    }
    let chol = SparseCholesky::factor(a)?;
    let mut x = chol.solve(b);
    // one step of iterative refinement
    let ax = a.mul_vec(&x);
    let r: Vec<f64> = b.iter().zip(&ax).map(|(b, ax)| b - ax).collect();
    let dx = chol.solve(&r);
    for (xi, d) in x.iter_mut().zip(&dx) {
        *xi += d;
    }
    let ax = a.mul_vec(&x);
    let res = b
        .iter()
        .zip(&ax)
        .map(|(b, ax)| (b - ax) * (b - ax))
        .sum::<f64>()
        .sqrt();
    if !res.is_finite() {
        return Err(Error::Solver(
            "direct solve produced non-finite values".into(),
        ));
    }
    Ok((
        x,
        SolveStats {
            direct: true,
            iterations: 1,
            relative_residual: res / bnorm,
        },
    ))
}

/// Jacobi-preconditioned conjugate gradients from a zero initial guess.
pub fn pcg(a: &CsrMatrix, b: &[f64], tol: f64, max_iter: usize) -> Result<(Vec<f64>, SolveStats)> {
    let n = a.n();
    let diag = a.diagonal();
    if let Some(i) = diag.iter().position(|&d| !(d > 0.0)) {
        return Err(Error::Solver(format!(
            "nonpositive diagonal entry at row {i}"
        )));
    }
    let bnorm = norm(b);
    let mut x = vec![0.0; n];
    let mut r = b.to_vec();
    let mut z: Vec<f64> = r.iter().zip(&diag).map(|(r, d)| r / d).collect();
    let mut p = z.clone();
    let mut ap = vec![0.0; n];
    let mut rz = dot(&r, &z);
    for it in 1..=max_iter {
        a.mul_vec_into(&p, &mut ap);
        let pap = dot(&p, &ap);
        if !(pap > 0.0) {
            return Err(Error::Solver(format!("CG breakdown: p^T A p = {pap:e}")));
        }
        let alpha = rz / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        let rel = norm(&r) / bnorm;
        if rel <= tol {
            return Ok((
                x,
                SolveStats {
                    direct: false,
                    iterations: it,
                    relative_residual: rel,
                },
            ));
        }
        for i in 0..n {
            z[i] = r[i] / diag[i];
        }
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    Err(Error::Solver(format!(
        "CG did not reach relative residual {tol:e} in {max_iter} iterations"
    )))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// 2D five-point Laplacian plus a shift on an `m x m` grid.
    fn grid(m: usize, shift: f64) -> CsrMatrix {
        let idx = |i: usize, j: usize| i * m + j;
        let mut t = Vec::new();
        for i in 0..m {
            for j in 0..m {
                t.push((idx(i, j), idx(i, j), 4.0 + shift));
                if i > 0 {
                    t.push((idx(i, j), idx(i - 1, j), -1.0));
                }
                if i + 1 < m {
                    t.push((idx(i, j), idx(i + 1, j), -1.0));
                }
                if j > 0 {
                    t.push((idx(i, j), idx(i, j - 1), -1.0));
                }
                if j + 1 < m {
                    t.push((idx(i, j), idx(i, j + 1), -1.0));
                }
            }
        }
        CsrMatrix::from_triplets(m * m, &t)
    }

    fn rhs(n: usize) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
    }

    #[test]
    fn triplets_sum_duplicates() {
        let a = CsrMatrix::from_triplets(2, &[(0, 0, 1.0), (0, 0, 2.0), (1, 0, 4.0), (0, 1, 4.0)]);
        assert_eq!(a.get(0, 0), 3.0);
        assert_eq!(a.nnz(), 3);
        assert_eq!(a.max_asymmetry(), 0.0);
    }

    #[test]
    fn direct_and_cg_agree() {
        let a = grid(30, 0.01);
        let b = rhs(a.n());
        let direct = SolverOptions {
            kind: SolverKind::Direct,
            ..Default::default()
        };
        let cg = SolverOptions {
            kind: SolverKind::Cg,
            ..Default::default()
        };
        let (x1, s1) = solve_spd(&a, &b, &direct).unwrap();
        let (x2, s2) = solve_spd(&a, &b, &cg).unwrap();
        assert!(s1.relative_residual < 1e-14);
        assert!(s2.relative_residual <= 1e-12);
        let diff = x1
            .iter()
            .zip(&x2)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        let scale = x1.iter().map(|v| v.abs()).fold(0.0, f64::max);
        assert!(diff < 1e-9 * scale);
    }

    #[test]
    fn indefinite_matrix_is_rejected() {
        let a = CsrMatrix::from_triplets(2, &[(0, 0, 1.0), (0, 1, 2.0), (1, 0, 2.0), (1, 1, 1.0)]);
        let opts = SolverOptions {
            kind: SolverKind::Direct,
            ..Default::default()
        };
        assert!(matches!(
            solve_spd(&a, &[1.0, 0.0], &opts),
            Err(Error::Solver(_))
        ));
    }

    #[test]
    fn zero_rhs_gives_zero() {
        let a = grid(5, 0.0);
        let (x, _) = solve_spd(&a, &[0.0; 25], &SolverOptions::default()).unwrap();
        assert!(x.iter().all(|&v| v == 0.0));
    }
}
