//! Approximate dual bases of B-splines.
//!
//! A dual transform `S` turns a B-spline basis `N` into test functions
//! `λ = S N` that are nearly bi-orthogonal to `N` and reproduce
//! polynomials up to degree `r`. Concretely, `S` is the symmetric banded
//! matrix that minimizes `‖S G − I‖_F` (with `G` the Gram matrix) subject to
//! exact reproduction
//!
//! ```text
//!     S · ∫ f N dξ = a_f      for every target f = Σ a_f,i N_i
//! ```
//!
//! The targets are the monomials of degree `0..=r`. The enhanced variant
//! adds the truncated powers `(ξ − ξ̂)₊^k` at knots of reduced continuity,
//! which is what keeps optimal rates on patches with `C⁰`/`C¹` lines. Rows
//! touching such knots get a wider band so the extra constraints fit.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::linalg::{SparseMatrix, TripletBuilder};
use crate::quadrature::GaussLegendre;
use crate::spline::{eval_basis_1d, gram_dense, KnotVector};

/// Accepted reproduction residual of a constructed transform.
pub const REPRODUCTION_TOL: f64 = 1e-8;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DualError {
    #[error("reproduction degree {r} exceeds the spline degree {p}")]
    DegreeTooHigh { r: usize, p: usize },
    #[error("dual transform violates reproduction by {residual:e}")]
    ReproductionFailure { residual: f64 },
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
}

/// How interior multiplicities are raised before refinement.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ContinuityMode {
    /// Every interior multiplicity `c` becomes `min(c + 1, p)`.
    AllKnots,
    /// Knots that are already `C⁰` stay untouched, the others gain one.
    PreserveC0,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DualVariant {
    Ad,
    Ead,
}

/// Knots whose insertion realizes [`reduce_continuity`].
pub fn continuity_reduction_knots(kv: &KnotVector, mode: ContinuityMode) -> Vec<f64> {
    let p = kv.degree();
    let mut out = Vec::new();
    for (x, c) in kv.interior() {
        let target = match mode {
            ContinuityMode::AllKnots => (c + 1).min(p).max(c),
            ContinuityMode::PreserveC0 => {
                if c < p {
                    c + 1
                } else {
                    c
                }
            }
        };
        out.extend(std::iter::repeat(x).take(target - c));
    }
    out
}

/// Lowers the continuity at every interior knot by one (never below `C⁰`).
///
/// With the multiplicity capped at `p`, both modes produce the same knot
/// vector; they differ only in intent, which callers may record.
pub fn reduce_continuity(kv: &KnotVector, mode: ContinuityMode) -> KnotVector {
    let extra = continuity_reduction_knots(kv, mode);
    let mut values = kv.values().to_vec();
    values.extend(extra);
    values.sort_by(|a, b| a.partial_cmp(b).unwrap());
    KnotVector::new(values, kv.degree()).expect("raising multiplicities up to p keeps the vector valid")
}

/// Exact Gram matrix `G_ik = ∫ N_i N_k dξ`.
pub fn gram_matrix(kv: &KnotVector) -> DMatrix<f64> {
    gram_dense(kv)
}

/// Interior knots with multiplicity of at least two, i.e. below full
/// `C^{p-1}` continuity.
pub fn limited_knots(kv: &KnotVector) -> Vec<(f64, usize)> {
    kv.interior().into_iter().filter(|&(_, c)| c >= 2).collect()
}

/// Dual transform of a univariate B-spline basis.
#[derive(Debug, Clone, PartialEq)]
pub struct DualTransform1D {
    pub matrix: DMatrix<f64>,
    pub variant: DualVariant,
    pub degree: usize,
    pub knots: KnotVector,
}

impl DualTransform1D {
    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    /// Largest `|i - j|` with a nonzero entry.
    pub fn bandwidth(&self) -> usize {
        let n = self.dim();
        let mut band = 0;
        for i in 0..n {
            for j in 0..n {
                if self.matrix[(i, j)] != 0.0 {
                    band = band.max(i.abs_diff(j));
                }
            }
        }
        band
    }
}

/// Target functions on the unit-scaled domain. Each target is evaluated
/// as `f(s)` with `s = (ξ - a) / (b - a)`.
#[derive(Debug, Clone, Copy)]
enum Target {
    Monomial(usize),
    Truncated { knot: f64, power: usize },
}

impl Target {
    fn eval(self, s: f64, span_lo: f64) -> f64 {
        match self {
            Target::Monomial(k) => s.powi(k as i32),
            Target::Truncated { knot, power } => {
                // decide by span so the value at the knot itself follows the
                // right-continuous convention used by the quadrature spans
                if span_lo >= knot {
                    (s - knot).powi(power as i32)
                } else {
                    0.0
                }
            }
        }
    }
}

fn targets(kv: &KnotVector, r: usize, variant: DualVariant) -> Vec<Target> {
    let (a, len) = (kv.first(), kv.domain_length());
    let p = kv.degree();
    let mut out: Vec<Target> = (0..=r).map(Target::Monomial).collect();
    if variant == DualVariant::Ead {
        for (x, c) in limited_knots(kv) {
            let lo = (p + 1).saturating_sub(c);
            for k in lo..=p.min(r) {
                out.push(Target::Truncated {
                    knot: (x - a) / len,
                    power: k,
                });
            }
        }
    }
    out
}

/// Moments `∫ f N_i dξ` of a target, integrated exactly span by span.
fn moments(kv: &KnotVector, t: Target) -> DVector<f64> {
    let n = kv.num_basis();
    let rule = GaussLegendre::new(kv.degree() + 1);
    let (a, len) = (kv.first(), kv.domain_length());
    let mut b = DVector::zeros(n);
    for (lo, hi) in kv.elements() {
        let s_lo = (lo - a) / len;
        for (x, w) in rule.mapped(lo, hi) {
            let f = t.eval((x - a) / len, s_lo);
            let be = eval_basis_1d(kv, x, 0).expect("inside domain");
            for (l, &v) in be.values().iter().enumerate() {
                b[be.first + l] += w * f * v;
            }
        }
    }
    b
}

fn touches(kv: &KnotVector, i: usize, knots: &[(f64, usize)]) -> bool {
    let (lo, hi) = kv.support(i);
    knots.iter().any(|&(x, _)| x >= lo && x <= hi)
}

/// Builds the (enhanced) approximate dual transform with reproduction
/// degree `r`.
///
/// For [`DualVariant::Ead`] the knot vector should already carry reduced
/// continuity (see [`reduce_continuity`]); every interior knot of
/// multiplicity two or more is treated as a limited-continuity knot.
pub fn dual_transform_1d(kv: &KnotVector, r: usize, variant: DualVariant) -> Result<DualTransform1D, DualError> {
    let p = kv.degree();
    if r > p {
        return Err(DualError::DegreeTooHigh { r, p });
    }
    let n = kv.num_basis();
    let g = gram_matrix(kv);
    let limited = if variant == DualVariant::Ead {
        limited_knots(kv)
    } else {
        Vec::new()
    };
    let tg = targets(kv, r, variant);
    let chol = g.clone().cholesky().expect("Gram matrix is SPD");
    let moments_list: Vec<DVector<f64>> = tg.iter().map(|&t| moments(kv, t)).collect();
    let coeffs: Vec<DVector<f64>> = moments_list.iter().map(|b| chol.solve(b)).collect();

    // Rows near limited knots start with band r + p. Closely spaced limited
    // knots can need more, so the extra width grows until the constraints
    // are satisfiable.
    let mut extra = if limited.is_empty() { 0 } else { p.max(1) };
    loop {
        let s = banded_solution(kv, &g, r, extra, &limited, &moments_list, &coeffs);
        let mut residual = 0.0f64;
        for (b, a_t) in moments_list.iter().zip(&coeffs) {
            let scale = 1.0 + a_t.amax();
            residual = residual.max((&s * b - a_t).amax() / scale);
        }
        if residual <= REPRODUCTION_TOL {
            return Ok(DualTransform1D {
                matrix: s,
                variant,
                degree: r,
                knots: kv.clone(),
            });
        }
        if limited.is_empty() || r + extra >= n {
            return Err(DualError::ReproductionFailure { residual });
        }
        extra += p.max(1);
    }
}

fn banded_solution(
    kv: &KnotVector,
    g: &DMatrix<f64>,
    r: usize,
    extra: usize,
    limited: &[(f64, usize)],
    moments_list: &[DVector<f64>],
    coeffs: &[DVector<f64>],
) -> DMatrix<f64> {
    let n = kv.num_basis();
    // free entries of the upper band
    let mut unknowns: Vec<(usize, usize)> = Vec::new();
    for i in 0..n {
        for j in i..n {
            let wide = !limited.is_empty() && (touches(kv, i, limited) || touches(kv, j, limited));
            let band = if wide { r + extra } else { r };
            if j - i <= band {
                unknowns.push((i, j));
            }
        }
    }
    let nu = unknowns.len();

    // S_{ac} = x_k for {a, c} = {i_k, j_k}
    let mut by_row: Vec<Vec<(usize, usize)>> = vec![Vec::new(); n];
    for (k, &(i, j)) in unknowns.iter().enumerate() {
        by_row[i].push((k, j));
        if i != j {
            by_row[j].push((k, i));
        }
    }

    // objective ‖S G − I‖² = xᵀ H x − 2 gᵀ x + const
    let g2 = g * g;
    let mut h = DMatrix::zeros(nu, nu);
    let mut lin = DVector::zeros(nu);
    for (a, contrib) in by_row.iter().enumerate() {
        for &(k, c) in contrib {
            lin[k] += g[(c, a)];
            for &(l, c2) in contrib {
                h[(k, l)] += g2[(c, c2)];
            }
        }
    }

    // reproduction constraints S b_t = a_t
    let m = moments_list.len() * n;
    let rows = m.max(nu);
    let mut cmat = DMatrix::zeros(rows, nu);
    let mut d = DVector::zeros(rows);
    for (ti, (b, a_t)) in moments_list.iter().zip(coeffs).enumerate() {
        for (a, contrib) in by_row.iter().enumerate() {
            let row = ti * n + a;
            for &(k, c) in contrib {
                cmat[(row, k)] += b[c];
            }
            d[row] = a_t[a];
        }
    }

    let x = constrained_least_squares(&h, &lin, cmat, &d, m);

    let mut s = DMatrix::zeros(n, n);
    for (k, &(i, j)) in unknowns.iter().enumerate() {
        s[(i, j)] = x[k];
        s[(j, i)] = x[k];
    }
    s
}

/// Minimizes `½ xᵀHx − gᵀx` subject to `C x = d` by the nullspace method.
/// `C` may be rank deficient; its first `m` rows are meaningful.
fn constrained_least_squares(
    h: &DMatrix<f64>,
    g: &DVector<f64>,
    mut c: DMatrix<f64>,
    d: &DVector<f64>,
    m: usize,
) -> DVector<f64> {
    let nu = h.nrows();
    if m == 0 {
        return h.clone().cholesky().expect("objective is SPD").solve(g);
    }
    // equilibrate rows
    let mut d = d.clone();
    for i in 0..m {
        let norm = c.row(i).norm();
        if norm > 0.0 {
            c.row_mut(i).scale_mut(1.0 / norm);
            d[i] /= norm;
        }
    }
    let svd = c.clone().svd(true, true);
    let u = svd.u.as_ref().unwrap();
    let vt = svd.v_t.as_ref().unwrap();
    let sig = &svd.singular_values;
    let tol = sig.max() * 1e-11 * (nu as f64).sqrt();
    let range: Vec<usize> = (0..sig.len()).filter(|&k| sig[k] > tol).collect();
    let null: Vec<usize> = (0..sig.len()).filter(|&k| sig[k] <= tol).collect();
    let pinv = |rhs: &DVector<f64>| {
        let mut x = DVector::zeros(nu);
        for &k in &range {
            x += vt.row(k).transpose() * (u.column(k).dot(rhs) / sig[k]);
        }
        x
    };
    let mut x0 = pinv(&d);
    for _ in 0..2 {
        let res = &d - &c * &x0;
        x0 += pinv(&res);
    }
    if null.is_empty() {
        return x0;
    }
    let mut z = DMatrix::zeros(nu, null.len());
    for (col, &k) in null.iter().enumerate() {
        z.set_column(col, &vt.row(k).transpose());
    }
    let reduced = z.transpose() * h * &z;
    let rhs = z.transpose() * (g - h * &x0);
    let y = match reduced.clone().cholesky() {
        Some(ch) => ch.solve(&rhs),
        None => reduced.lu().solve(&rhs).unwrap_or_else(|| DVector::zeros(null.len())),
    };
    x0 + z * y
}

/// How the bivariate transform treats rational weights.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WeightMode {
    Bspline,
    Nurbs,
}

/// Bivariate transform `Λ⁻¹ (S_u ⊗ S_v) Λ⁻¹`, with `Λ = I` for B-splines.
#[derive(Debug, Clone, PartialEq)]
pub struct DualTransform2D {
    pub matrix: SparseMatrix,
    pub mode: WeightMode,
    pub n: usize,
    pub m: usize,
    columns: SparseMatrix,
}

/// Rows of a bivariate transform that act on one element's trial functions.
#[derive(Debug, Clone, PartialEq)]
pub struct ElementTransform {
    /// Global test indices (rows of the patch transform).
    pub rows: Vec<usize>,
    /// Global trial indices of the element.
    pub cols: Vec<usize>,
    pub block: DMatrix<f64>,
}

/// Kronecker product of two univariate transforms, index `i * m + j`.
pub fn dual_transform_2d(
    su: &DualTransform1D,
    sv: &DualTransform1D,
    weights: Option<&[f64]>,
) -> Result<DualTransform2D, DualError> {
    let (n, m) = (su.dim(), sv.dim());
    if let Some(w) = weights {
        if w.len() != n * m {
            return Err(DualError::DimensionMismatch {
                expected: n * m,
                found: w.len(),
            });
        }
    }
    let mut t = TripletBuilder::new(n * m, n * m);
    for i in 0..n {
        for k in 0..n {
            let a = su.matrix[(i, k)];
            if a == 0.0 {
                continue;
            }
            for j in 0..m {
                for l in 0..m {
                    let b = sv.matrix[(j, l)];
                    if b == 0.0 {
                        continue;
                    }
                    let (row, col) = (i * m + j, k * m + l);
                    let mut v = a * b;
                    if let Some(w) = weights {
                        v /= w[row] * w[col];
                    }
                    t.push(row, col, v);
                }
            }
        }
    }
    let matrix = t.build();
    Ok(DualTransform2D {
        columns: matrix.transpose(),
        matrix,
        mode: if weights.is_some() {
            WeightMode::Nurbs
        } else {
            WeightMode::Bspline
        },
        n,
        m,
    })
}

impl DualTransform2D {
    pub fn identity(n: usize, m: usize) -> Self {
        let matrix = SparseMatrix::identity(n * m);
        Self {
            columns: matrix.clone(),
            matrix,
            mode: WeightMode::Bspline,
            n,
            m,
        }
    }

    pub fn dim(&self) -> usize {
        self.n * self.m
    }
}

/// Block `T^e` of `s2d` for an element whose trial functions are `cols`:
/// every row with a nonzero entry in those columns, restricted to them.
/// Summing `T^e K^e` over elements equals `S (Σ K^e)`.
pub fn extract_element_transform(s2d: &DualTransform2D, cols: &[usize]) -> ElementTransform {
    let mut rows: Vec<usize> = Vec::new();
    for &c in cols {
        rows.extend_from_slice(s2d.columns.row(c).0);
    }
    rows.sort_unstable();
    rows.dedup();
    let mut block = DMatrix::zeros(rows.len(), cols.len());
    for (b, &c) in cols.iter().enumerate() {
        let (r_idx, vals) = s2d.columns.row(c);
        for (&r, &v) in r_idx.iter().zip(vals) {
            let a = rows.binary_search(&r).unwrap();
            block[(a, b)] = v;
        }
    }
    ElementTransform {
        rows,
        cols: cols.to_vec(),
        block,
    }
}
