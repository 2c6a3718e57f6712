//! Compressed sparse row storage and direct solves.
//!
//! Matrices are assembled from triplets; duplicates are summed after a
//! stable sort on `(row, col)`, so the same triplet sequence always gives
//! bit-identical storage. Factorizations are delegated to `faer` (sparse LU
//! with partial pivoting, or dense LU for small and nearly dense systems).

use std::time::Instant;

use faer::prelude::*;
use faer::sparse::{SparseColMat, Triplet};
use nalgebra::DMatrix;
use thiserror::Error;

/// Entries with magnitude below this fraction of the largest entry are
/// treated as structural zeros when counting.
pub const PRUNE_TOL: f64 = 1e-14;

/// Relative residual accepted by [`solve_direct`].
pub const RESIDUAL_TOL: f64 = 1e-10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SolveError {
    #[error("matrix is {rows}x{cols}, expected square")]
    NotSquare { rows: usize, cols: usize },
    #[error("dimension mismatch: matrix has {expected} rows, vector has {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("matrix is singular to working precision")]
    SingularMatrix,
    #[error("relative residual {residual:e} exceeds {tol:e}")]
    ResidualTooLarge { residual: f64, tol: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct SparseMatrix {
    nrows: usize,
    ncols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

/// Growing list of `(row, col, value)` entries.
#[derive(Debug, Clone, Default)]
pub struct TripletBuilder {
    nrows: usize,
    ncols: usize,
    entries: Vec<(usize, usize, f64)>,
}

impl TripletBuilder {
    pub fn new(nrows: usize, ncols: usize) -> Self {
        Self {
            nrows,
            ncols,
            entries: Vec::new(),
        }
    }

    pub fn with_capacity(nrows: usize, ncols: usize, cap: usize) -> Self {
        Self {
            nrows,
            ncols,
            entries: Vec::with_capacity(cap),
        }
    }

    pub fn push(&mut self, row: usize, col: usize, value: f64) {
        debug_assert!(row < self.nrows && col < self.ncols);
        self.entries.push((row, col, value));
    }

    pub fn extend<I: IntoIterator<Item = (usize, usize, f64)>>(&mut self, it: I) {
        self.entries.extend(it);
    }

    /// Adds every entry of `m` shifted by the given offsets.
    pub fn add_block(&mut self, row_off: usize, col_off: usize, m: &SparseMatrix) {
        for (i, j, v) in m.iter() {
            self.push(row_off + i, col_off + j, v);
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn build(self) -> SparseMatrix {
        SparseMatrix::from_triplets(self.nrows, self.ncols, self.entries)
    }
}

impl SparseMatrix {
    pub fn zeros(nrows: usize, ncols: usize) -> Self {
        Self {
            nrows,
            ncols,
            row_ptr: vec![0; nrows + 1],
            col_idx: Vec::new(),
            values: Vec::new(),
        }
    }

    pub fn identity(n: usize) -> Self {
        Self::diagonal(&vec![1.0; n])
    }

    pub fn diagonal(d: &[f64]) -> Self {
        let n = d.len();
        Self {
            nrows: n,
            ncols: n,
            row_ptr: (0..=n).collect(),
            col_idx: (0..n).collect(),
            values: d.to_vec(),
        }
    }

    /// Sums duplicate entries after a stable sort on `(row, col)`.
    pub fn from_triplets(nrows: usize, ncols: usize, mut entries: Vec<(usize, usize, f64)>) -> Self {
        entries.sort_by_key(|&(r, c, _)| (r, c));
        let mut row_ptr = vec![0usize; nrows + 1];
        let mut col_idx = Vec::with_capacity(entries.len());
        let mut values: Vec<f64> = Vec::with_capacity(entries.len());
        let mut last: Option<(usize, usize)> = None;
        for (r, c, v) in entries {
            assert!(r < nrows && c < ncols, "triplet ({r}, {c}) outside {nrows}x{ncols}");
            if last == Some((r, c)) {
                *values.last_mut().unwrap() += v;
            } else {
                row_ptr[r + 1] += 1;
                col_idx.push(c);
                values.push(v);
                last = Some((r, c));
            }
        }
        for i in 0..nrows {
            row_ptr[i + 1] += row_ptr[i];
        }
        Self {
            nrows,
            ncols,
            row_ptr,
            col_idx,
            values,
        }
    }

    /// Keeps entries with `|a_ij| > tol`.
    pub fn from_dense(a: &DMatrix<f64>, tol: f64) -> Self {
        let mut t = TripletBuilder::new(a.nrows(), a.ncols());
        for i in 0..a.nrows() {
            for j in 0..a.ncols() {
                let v = a[(i, j)];
                if v.abs() > tol {
                    t.push(i, j, v);
                }
            }
        }
        t.build()
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut a = DMatrix::zeros(self.nrows, self.ncols);
        for (i, j, v) in self.iter() {
            a[(i, j)] += v;
        }
        a
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    /// Stored entries, explicit zeros included.
    pub fn stored(&self) -> usize {
        self.values.len()
    }

    pub fn row(&self, i: usize) -> (&[usize], &[f64]) {
        let (a, b) = (self.row_ptr[i], self.row_ptr[i + 1]);
        (&self.col_idx[a..b], &self.values[a..b])
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (cols, vals) = self.row(i);
        match cols.binary_search(&j) {
            Ok(k) => vals[k],
            Err(_) => 0.0,
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.nrows).flat_map(move |i| {
            let (c, v) = self.row(i);
            c.iter().zip(v).map(move |(&j, &x)| (i, j, x))
        })
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Maximum absolute row sum.
    pub fn norm_inf(&self) -> f64 {
        (0..self.nrows)
            .map(|i| self.row(i).1.iter().map(|v| v.abs()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    pub fn row_sums(&self) -> Vec<f64> {
        (0..self.nrows).map(|i| self.row(i).1.iter().sum()).collect()
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.ncols);
        (0..self.nrows)
            .map(|i| {
                let (c, v) = self.row(i);
                c.iter().zip(v).map(|(&j, &a)| a * x[j]).sum()
            })
            .collect()
    }

    pub fn transpose(&self) -> Self {
        let mut counts = vec![0usize; self.ncols + 1];
        for &j in &self.col_idx {
            counts[j + 1] += 1;
        }
        for j in 0..self.ncols {
            counts[j + 1] += counts[j];
        }
        let row_ptr = counts.clone();
        let mut next = counts;
        let mut col_idx = vec![0; self.values.len()];
        let mut values = vec![0.0; self.values.len()];
        for (i, j, v) in self.iter() {
            let k = next[j];
            col_idx[k] = i;
            values[k] = v;
            next[j] += 1;
        }
        Self {
            nrows: self.ncols,
            ncols: self.nrows,
            row_ptr,
            col_idx,
            values,
        }
    }

    /// Sparse product `self * rhs` (Gustavson's row-by-row algorithm).
    pub fn matmul(&self, rhs: &SparseMatrix) -> Self {
        assert_eq!(self.ncols, rhs.nrows, "inner dimensions differ");
        let mut acc = vec![0.0; rhs.ncols];
        let mut mark = vec![usize::MAX; rhs.ncols];
        let mut row_ptr = Vec::with_capacity(self.nrows + 1);
        row_ptr.push(0);
        let mut col_idx = Vec::new();
        let mut values = Vec::new();
        let mut pattern: Vec<usize> = Vec::new();
        for i in 0..self.nrows {
            pattern.clear();
            let (ca, va) = self.row(i);
            for (&k, &a) in ca.iter().zip(va) {
                let (cb, vb) = rhs.row(k);
                for (&j, &b) in cb.iter().zip(vb) {
                    if mark[j] != i {
                        mark[j] = i;
                        acc[j] = 0.0;
                        pattern.push(j);
                    }
                    acc[j] += a * b;
                }
            }
            pattern.sort_unstable();
            for &j in &pattern {
                col_idx.push(j);
                values.push(acc[j]);
            }
            row_ptr.push(col_idx.len());
        }
        Self {
            nrows: self.nrows,
            ncols: rhs.ncols,
            row_ptr,
            col_idx,
            values,
        }
    }

    /// `alpha * self + beta * rhs`.
    pub fn add_scaled(&self, alpha: f64, rhs: &SparseMatrix, beta: f64) -> Self {
        assert_eq!((self.nrows, self.ncols), (rhs.nrows, rhs.ncols));
        let mut row_ptr = Vec::with_capacity(self.nrows + 1);
        row_ptr.push(0);
        let mut col_idx = Vec::with_capacity(self.stored() + rhs.stored());
        let mut values = Vec::with_capacity(self.stored() + rhs.stored());
        for i in 0..self.nrows {
            let (ca, va) = self.row(i);
            let (cb, vb) = rhs.row(i);
            let (mut p, mut q) = (0, 0);
            while p < ca.len() || q < cb.len() {
                let take_a = q == cb.len() || (p < ca.len() && ca[p] < cb[q]);
                let take_b = p == ca.len() || (q < cb.len() && cb[q] < ca[p]);
                if take_a {
                    col_idx.push(ca[p]);
                    values.push(alpha * va[p]);
                    p += 1;
                } else if take_b {
                    col_idx.push(cb[q]);
                    values.push(beta * vb[q]);
                    q += 1;
                } else {
                    col_idx.push(ca[p]);
                    values.push(alpha * va[p] + beta * vb[q]);
                    p += 1;
                    q += 1;
                }
            }
            row_ptr.push(col_idx.len());
        }
        Self {
            nrows: self.nrows,
            ncols: self.ncols,
            row_ptr,
            col_idx,
            values,
        }
    }

    pub fn scale(&self, alpha: f64) -> Self {
        let mut out = self.clone();
        out.values.iter_mut().for_each(|v| *v *= alpha);
        out
    }

    /// Multiplies row `i` by `d[i]`.
    pub fn scale_rows(&self, d: &[f64]) -> Self {
        assert_eq!(d.len(), self.nrows);
        let mut out = self.clone();
        for i in 0..self.nrows {
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                out.values[k] *= d[i];
            }
        }
        out
    }

    /// Multiplies column `j` by `d[j]`.
    pub fn scale_cols(&self, d: &[f64]) -> Self {
        assert_eq!(d.len(), self.ncols);
        let mut out = self.clone();
        for (k, &j) in self.col_idx.iter().enumerate() {
            out.values[k] *= d[j];
        }
        out
    }

    /// Submatrix on the given rows and columns, in the given order.
    pub fn select(&self, rows: &[usize], cols: &[usize]) -> Self {
        let mut col_map = vec![usize::MAX; self.ncols];
        for (new, &old) in cols.iter().enumerate() {
            col_map[old] = new;
        }
        let mut t = TripletBuilder::new(rows.len(), cols.len());
        for (new_i, &i) in rows.iter().enumerate() {
            let (c, v) = self.row(i);
            for (&j, &x) in c.iter().zip(v) {
                if col_map[j] != usize::MAX {
                    t.push(new_i, col_map[j], x);
                }
            }
        }
        t.build()
    }

    /// Drops entries with `|a_ij| <= rel_tol * max|A|`.
    pub fn pruned(&self, rel_tol: f64) -> Self {
        let cut = rel_tol * self.max_abs();
        let mut t = TripletBuilder::new(self.nrows, self.ncols);
        t.extend(self.iter().filter(|&(_, _, v)| v.abs() > cut));
        t.build()
    }

    pub fn is_symmetric(&self, rel_tol: f64) -> bool {
        if self.nrows != self.ncols {
            return false;
        }
        let tol = rel_tol * self.max_abs();
        self.iter().all(|(i, j, v)| (v - self.get(j, i)).abs() <= tol)
    }

    fn to_faer(&self) -> SparseColMat<usize, f64> {
        let trips: Vec<_> = self.iter().map(|(i, j, v)| Triplet::new(i, j, v)).collect();
        SparseColMat::try_new_from_triplets(self.nrows, self.ncols, &trips)
            .expect("CSR entries are valid triplets")
    }
}

/// Number of structurally nonzero entries and the largest `|i - j|` among
/// them, after pruning entries below [`PRUNE_TOL`] relative to the largest.
pub fn nnz_and_bandwidth(a: &SparseMatrix) -> (usize, usize) {
    let cut = PRUNE_TOL * a.max_abs();
    let mut nnz = 0;
    let mut band = 0;
    for (i, j, v) in a.iter() {
        if v.abs() > cut {
            nnz += 1;
            band = band.max(i.abs_diff(j));
        }
    }
    (nnz, band)
}

enum Factor {
    Sparse(faer::sparse::linalg::solvers::Lu<usize, f64>),
    Dense(faer::linalg::solvers::PartialPivLu<f64>),
}

/// LU factorization of a square sparse matrix.
pub struct SparseLu {
    a: SparseMatrix,
    factor: Factor,
    /// Row equilibration applied before factoring.
    row_scale: Vec<f64>,
    norm: f64,
}

impl std::fmt::Debug for SparseLu {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SparseLu").field("n", &self.a.nrows).finish()
    }
}

/// Below this dimension nearly dense matrices use a dense LU.
const DENSE_LIMIT: usize = 2000;

impl SparseLu {
    pub fn factor(a: &SparseMatrix) -> Result<Self, SolveError> {
        if a.nrows != a.ncols {
            return Err(SolveError::NotSquare {
                rows: a.nrows,
                cols: a.ncols,
            });
        }
        let n = a.nrows;
        // mixed systems couple rows of very different magnitude
        let row_scale: Vec<f64> = (0..n)
            .map(|i| {
                let m = a.row(i).1.iter().fold(0.0f64, |m, v| m.max(v.abs()));
                if m > 0.0 {
                    1.0 / m
                } else {
                    1.0
                }
            })
            .collect();
        let scaled = a.scale_rows(&row_scale);
        let dense = n <= DENSE_LIMIT && (n <= 64 || a.stored() as f64 > 0.1 * (n * n) as f64);
        let factor = if dense {
            let mut m = faer::Mat::<f64>::zeros(n, n);
            for (i, j, v) in scaled.iter() {
                m[(i, j)] += v;
            }
            Factor::Dense(m.partial_piv_lu())
        } else {
            let lu = scaled.to_faer().sp_lu().map_err(|_| SolveError::SingularMatrix)?;
            Factor::Sparse(lu)
        };
        Ok(Self {
            a: a.clone(),
            factor,
            row_scale,
            norm: a.norm_inf(),
        })
    }

    pub fn dim(&self) -> usize {
        self.a.nrows
    }

    fn raw_solve(&self, b: &[f64]) -> Vec<f64> {
        let rhs = faer::Col::<f64>::from_fn(b.len(), |i| b[i] * self.row_scale[i]);
        let x = match &self.factor {
            Factor::Sparse(lu) => lu.solve(&rhs),
            Factor::Dense(lu) => lu.solve(&rhs),
        };
        (0..b.len()).map(|i| x[i]).collect()
    }

    /// Residual `b − Ax` and the componentwise backward error
    /// `max_i |r_i| / (|A||x| + |b|)_i`.
    fn backward_error(&self, x: &[f64], b: &[f64]) -> (Vec<f64>, f64) {
        let mut r = Vec::with_capacity(b.len());
        let mut omega: f64 = 0.0;
        for (i, &bi) in b.iter().enumerate() {
            let (cols, vals) = self.a.row(i);
            let (mut ax, mut den) = (0.0, bi.abs());
            for (&j, &v) in cols.iter().zip(vals) {
                ax += v * x[j];
                den += (v * x[j]).abs();
            }
            let ri = bi - ax;
            if den > 0.0 {
                omega = omega.max(ri.abs() / den);
            } else if ri != 0.0 {
                omega = f64::INFINITY;
            }
            r.push(ri);
        }
        (r, omega)
    }

    /// Solves `A x = b` with iterative refinement until the componentwise
    /// backward error stops improving, then checks
    /// `‖Ax − b‖ ≤ 1e-10 (‖A‖‖x‖ + ‖b‖)` in the max norm.
    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>, SolveError> {
        let n = self.dim();
        if b.len() != n {
            return Err(SolveError::DimensionMismatch {
                expected: n,
                found: b.len(),
            });
        }
        let mut x = self.raw_solve(b);
        if x.iter().any(|v| !v.is_finite()) {
            return Err(SolveError::SingularMatrix);
        }
        let (mut r, mut omega) = self.backward_error(&x, b);
        for _ in 0..6 {
            if omega <= 2.0 * f64::EPSILON {
                break;
            }
            let dx = self.raw_solve(&r);
            let cand: Vec<f64> = x.iter().zip(&dx).map(|(a, d)| a + d).collect();
            let (r2, omega2) = self.backward_error(&cand, b);
            if !(omega2 < omega) {
                break;
            }
            x = cand;
            r = r2;
            omega = omega2;
        }
        let scale = self.norm * inf_norm(&x) + inf_norm(b);
        let rel = if scale > 0.0 { inf_norm(&r) / scale } else { 0.0 };
        if rel > RESIDUAL_TOL {
            return Err(SolveError::ResidualTooLarge {
                residual: rel,
                tol: RESIDUAL_TOL,
            });
        }
        Ok(x)
    }

    /// Solves for every column of `b`.
    pub fn solve_columns(&self, b: &SparseMatrix) -> Result<DMatrix<f64>, SolveError> {
        let dense = b.to_dense();
        let mut out = DMatrix::zeros(b.nrows(), b.ncols());
        for j in 0..b.ncols() {
            let col: Vec<f64> = dense.column(j).iter().copied().collect();
            if col.iter().all(|&v| v == 0.0) {
                continue;
            }
            let x = self.solve(&col)?;
            out.column_mut(j).copy_from_slice(&x);
        }
        Ok(out)
    }
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Timings of a factor-and-solve.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct SolveTimes {
    pub factor_s: f64,
    pub solve_s: f64,
}

/// Factors `a` and solves `a x = b`.
pub fn solve_direct(a: &SparseMatrix, b: &[f64]) -> Result<Vec<f64>, SolveError> {
    solve_timed(a, b).map(|(x, _)| x)
}

pub fn solve_timed(a: &SparseMatrix, b: &[f64]) -> Result<(Vec<f64>, SolveTimes), SolveError> {
    if b.len() != a.nrows {
        return Err(SolveError::DimensionMismatch {
            expected: a.nrows,
            found: b.len(),
        });
    }
    let t0 = Instant::now();
    let lu = SparseLu::factor(a)?;
    let t1 = Instant::now();
    let x = lu.solve(b)?;
    let t2 = Instant::now();
    Ok((
        x,
        SolveTimes {
            factor_s: (t1 - t0).as_secs_f64(),
            solve_s: (t2 - t1).as_secs_f64(),
        },
    ))
}
