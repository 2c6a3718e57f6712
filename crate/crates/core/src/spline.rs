//! B-spline and NURBS bases on open knot vectors.
//!
//! Everything here follows the usual Cox-de Boor machinery: a [`KnotVector`]
//! owns the parametric breakpoints and the degree, [`eval_basis_1d`] returns
//! the `p + 1` functions that are nonzero on the span containing a parameter,
//! and [`SurfacePatch`] combines two knot vectors with a weighted control net.
//!
//! Bivariate indices are flattened as `k = i * m + j` with `i` running along
//! ξ (outer) and `j` along η (inner). Every other module relies on this
//! ordering, including the Kronecker products built in [`crate::dual`].

use nalgebra::DMatrix;
use thiserror::Error;

use crate::quadrature::GaussLegendre;

/// Relative tolerance used when comparing knot values for equality.
const KNOT_EPS: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SplineError {
    #[error("knot {index} ({value}) is smaller than its predecessor")]
    DecreasingKnots { index: usize, value: f64 },
    #[error("knot vector is not open: end knots must be repeated exactly {expected} times")]
    NotOpen { expected: usize },
    #[error("knot {value} has multiplicity {multiplicity}, at most {max} allowed")]
    ExcessMultiplicity {
        value: f64,
        multiplicity: usize,
        max: usize,
    },
    #[error("knot vector of degree {degree} needs at least {needed} basis functions, has {found}")]
    TooFewKnots {
        degree: usize,
        needed: usize,
        found: usize,
    },
    #[error("parameter {value} outside of [{lo}, {hi}]")]
    OutOfDomain { value: f64, lo: f64, hi: f64 },
    #[error("requested {requested} derivatives of a degree {degree} basis")]
    TooManyDerivatives { requested: usize, degree: usize },
    #[error("inserting {value} would raise its multiplicity above {max}")]
    MultiplicityOverflow { value: f64, max: usize },
    #[error("inserted knot {value} is not strictly inside the domain")]
    KnotOutsideDomain { value: f64 },
    #[error("control net has {found} entries, expected {expected}")]
    NetDimension { expected: usize, found: usize },
    #[error("control point {index} has non-positive weight {weight}")]
    NonPositiveWeight { index: usize, weight: f64 },
}

pub type Result<T> = std::result::Result<T, SplineError>;

/// An open, non-decreasing knot vector together with its degree.
#[derive(Debug, Clone, PartialEq)]
pub struct KnotVector {
    values: Vec<f64>,
    degree: usize,
}

impl KnotVector {
    /// Validates `values` as an open knot vector of degree `degree`.
    pub fn new(values: Vec<f64>, degree: usize) -> Result<Self> {
        for (index, w) in values.windows(2).enumerate() {
            if w[1] < w[0] {
                return Err(SplineError::DecreasingKnots {
                    index: index + 1,
                    value: w[1],
                });
            }
        }
        let needed = degree + 1;
        let found = values.len().saturating_sub(degree + 1);
        if values.len() < 2 * (degree + 1) || found < needed {
            return Err(SplineError::TooFewKnots {
                degree,
                needed,
                found,
            });
        }
        let kv = Self { values, degree };
        let distinct = kv.distinct();
        let (first, last) = (distinct[0], distinct[distinct.len() - 1]);
        if first.1 != degree + 1 || last.1 != degree + 1 || distinct.len() < 2 {
            return Err(SplineError::NotOpen {
                expected: degree + 1,
            });
        }
        for &(value, multiplicity) in &distinct[1..distinct.len() - 1] {
            if multiplicity > degree + 1 {
                return Err(SplineError::ExcessMultiplicity {
                    value,
                    multiplicity,
                    max: degree + 1,
                });
            }
        }
        Ok(kv)
    }

    /// Open knot vector without interior knots on `[a, b]`.
    pub fn bezier(degree: usize, a: f64, b: f64) -> Self {
        let mut values = vec![a; degree + 1];
        values.extend(std::iter::repeat(b).take(degree + 1));
        Self { values, degree }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    /// Number of basis functions `n = len - p - 1`.
    pub fn num_basis(&self) -> usize {
        self.values.len() - self.degree - 1
    }

    pub fn first(&self) -> f64 {
        self.values[0]
    }

    pub fn last(&self) -> f64 {
        self.values[self.values.len() - 1]
    }

    pub fn domain_length(&self) -> f64 {
        self.last() - self.first()
    }

    /// Distinct knot values with their multiplicities, ends included.
    pub fn distinct(&self) -> Vec<(f64, usize)> {
        let mut out: Vec<(f64, usize)> = Vec::new();
        for &v in &self.values {
            match out.last_mut() {
                Some((last, count)) if (v - *last).abs() <= KNOT_EPS * (1.0 + v.abs()) => {
                    *count += 1
                }
                _ => out.push((v, 1)),
            }
        }
        out
    }

    /// Distinct interior knots with their multiplicities.
    pub fn interior(&self) -> Vec<(f64, usize)> {
        let d = self.distinct();
        d[1..d.len() - 1].to_vec()
    }

    pub fn multiplicity(&self, value: f64) -> usize {
        self.values
            .iter()
            .filter(|&&v| (v - value).abs() <= KNOT_EPS * (1.0 + value.abs()))
            .count()
    }

    /// Nonzero knot spans `[a, b)` in increasing order.
    pub fn elements(&self) -> Vec<(f64, f64)> {
        let d = self.distinct();
        d.windows(2).map(|w| (w[0].0, w[1].0)).collect()
    }

    /// Index `s` of the knot span with `values[s] <= x < values[s + 1]`,
    /// the last nonempty span being closed on the right.
    pub fn find_span(&self, x: f64) -> Result<usize> {
        let (lo, hi) = (self.first(), self.last());
        if !(x >= lo && x <= hi) {
            return Err(SplineError::OutOfDomain { value: x, lo, hi });
        }
        let n = self.num_basis();
        let p = self.degree;
        if x >= self.values[n] {
            // right end: last nonempty span
            let mut s = n - 1;
            while self.values[s] >= self.values[s + 1] {
                s -= 1;
            }
            return Ok(s);
        }
        let (mut low, mut high) = (p, n);
        let mut mid = (low + high) / 2;
        while x < self.values[mid] || x >= self.values[mid + 1] {
            if x < self.values[mid] {
                high = mid;
            } else {
                low = mid;
            }
            mid = (low + high) / 2;
        }
        Ok(mid)
    }

    /// Greville abscissae (knot averages).
    pub fn greville(&self) -> Vec<f64> {
        let p = self.degree;
        (0..self.num_basis())
            .map(|i| {
                if p == 0 {
                    0.5 * (self.values[i] + self.values[i + 1])
                } else {
                    self.values[i + 1..=i + p].iter().sum::<f64>() / p as f64
                }
            })
            .collect()
    }

    /// Support `[values[i], values[i + p + 1]]` of basis function `i`.
    pub fn support(&self, i: usize) -> (f64, f64) {
        (self.values[i], self.values[i + self.degree + 1])
    }

    /// Same interior knots, one fewer repetition of the end knots, degree
    /// lowered by one. Contains the derivatives of every spline on `self`.
    pub fn derivative_space(&self) -> Result<Self> {
        if self.degree == 0 {
            return Err(SplineError::TooFewKnots {
                degree: 0,
                needed: 1,
                found: 0,
            });
        }
        let values = self.values[1..self.values.len() - 1].to_vec();
        Self::new(values, self.degree - 1)
    }

    /// Knots to insert so that every nonzero span is split into `2^level`
    /// equal parts.
    pub fn dyadic_refinement(&self, level: u32) -> Vec<f64> {
        let parts = 1usize << level;
        let mut out = Vec::new();
        for (a, b) in self.elements() {
            for k in 1..parts {
                out.push(a + (b - a) * k as f64 / parts as f64);
            }
        }
        out
    }
}

/// Nonzero basis functions of one parameter value.
#[derive(Debug, Clone, PartialEq)]
pub struct BasisEval {
    /// Index of the first nonzero basis function.
    pub first: usize,
    /// `ders[k][a]` is the k-th derivative of basis `first + a`.
    pub ders: Vec<Vec<f64>>,
}

impl BasisEval {
    pub fn values(&self) -> &[f64] {
        &self.ders[0]
    }

    pub fn derivatives(&self, order: usize) -> &[f64] {
        &self.ders[order]
    }
}

/// Evaluates the `p + 1` nonzero basis functions at `x` and their first
/// `nderiv` derivatives.
pub fn eval_basis_1d(kv: &KnotVector, x: f64, nderiv: usize) -> Result<BasisEval> {
    let p = kv.degree;
    if nderiv > p {
        return Err(SplineError::TooManyDerivatives {
            requested: nderiv,
            degree: p,
        });
    }
    let span = kv.find_span(x)?;
    Ok(BasisEval {
        first: span - p,
        ders: ders_basis_funs(&kv.values, span, x, p, nderiv),
    })
}

// Piegl & Tiller, algorithm A2.3.
fn ders_basis_funs(u: &[f64], span: usize, x: f64, p: usize, n: usize) -> Vec<Vec<f64>> {
    let mut ndu = vec![vec![0.0; p + 1]; p + 1];
    let mut left = vec![0.0; p + 1];
    let mut right = vec![0.0; p + 1];
    ndu[0][0] = 1.0;
    for j in 1..=p {
        left[j] = x - u[span + 1 - j];
        right[j] = u[span + j] - x;
        let mut saved = 0.0;
        for r in 0..j {
            ndu[j][r] = right[r + 1] + left[j - r];
            let temp = ndu[r][j - 1] / ndu[j][r];
            ndu[r][j] = saved + right[r + 1] * temp;
            saved = left[j - r] * temp;
        }
        ndu[j][j] = saved;
    }
    let mut ders = vec![vec![0.0; p + 1]; n + 1];
    for j in 0..=p {
        ders[0][j] = ndu[j][p];
    }
    let mut a = vec![vec![0.0; p + 1]; 2];
    for r in 0..=p {
        let (mut s1, mut s2) = (0usize, 1usize);
        a[0][0] = 1.0;
        for k in 1..=n {
            let mut d = 0.0;
            let rk = r as isize - k as isize;
            let pk = p - k;
            if r >= k {
                a[s2][0] = a[s1][0] / ndu[pk + 1][rk as usize];
                d = a[s2][0] * ndu[rk as usize][pk];
            }
            let j1 = if rk >= -1 { 1 } else { (-rk) as usize };
            let j2 = if r as isize - 1 <= pk as isize {
                k - 1
            } else {
                p - r
            };
            for j in j1..=j2 {
                let idx = (rk + j as isize) as usize;
                a[s2][j] = (a[s1][j] - a[s1][j - 1]) / ndu[pk + 1][idx];
                d += a[s2][j] * ndu[idx][pk];
            }
            if r <= pk {
                a[s2][k] = -a[s1][k - 1] / ndu[pk + 1][r];
                d += a[s2][k] * ndu[r][pk];
            }
            ders[k][r] = d;
            std::mem::swap(&mut s1, &mut s2);
        }
    }
    let mut fac = p as f64;
    for k in 1..=n {
        for v in ders[k].iter_mut() {
            *v *= fac;
        }
        fac *= (p - k) as f64;
    }
    ders
}

/// Tensor-product spline space, optionally rational.
///
/// Used on its own for the shear fields, whose weights are not tied to
/// control points of the geometry.
#[derive(Debug, Clone, PartialEq)]
pub struct TensorSpace {
    pub knots_u: KnotVector,
    pub knots_v: KnotVector,
    /// `None` for plain B-splines.
    pub weights: Option<Vec<f64>>,
}

/// Nonzero bivariate functions at one parametric point.
#[derive(Debug, Clone)]
pub struct SpaceEval {
    pub first_u: usize,
    pub first_v: usize,
    pub len_u: usize,
    pub len_v: usize,
    /// Values in local order `a * len_v + b`.
    pub values: Vec<f64>,
    pub d_xi: Vec<f64>,
    pub d_eta: Vec<f64>,
    /// Weight function and its parametric gradient (1 and 0 for B-splines).
    pub weight: f64,
    pub weight_grad: [f64; 2],
}

impl SpaceEval {
    /// Global indices of the nonzero functions, in local order.
    pub fn indices(&self, m: usize) -> impl Iterator<Item = usize> + '_ {
        (0..self.len_u)
            .flat_map(move |a| (0..self.len_v).map(move |b| (self.first_u + a) * m + self.first_v + b))
    }
}

impl TensorSpace {
    pub fn new(knots_u: KnotVector, knots_v: KnotVector, weights: Option<Vec<f64>>) -> Result<Self> {
        let expected = knots_u.num_basis() * knots_v.num_basis();
        if let Some(w) = &weights {
            if w.len() != expected {
                return Err(SplineError::NetDimension {
                    expected,
                    found: w.len(),
                });
            }
            if let Some((index, &weight)) = w.iter().enumerate().find(|(_, &x)| !(x > 0.0)) {
                return Err(SplineError::NonPositiveWeight { index, weight });
            }
        }
        Ok(Self {
            knots_u,
            knots_v,
            weights,
        })
    }

    pub fn n(&self) -> usize {
        self.knots_u.num_basis()
    }

    pub fn m(&self) -> usize {
        self.knots_v.num_basis()
    }

    pub fn dim(&self) -> usize {
        self.n() * self.m()
    }

    pub fn degrees(&self) -> (usize, usize) {
        (self.knots_u.degree(), self.knots_v.degree())
    }

    pub fn eval(&self, xi: f64, eta: f64, nderiv: usize) -> Result<SpaceEval> {
        let nd = nderiv.min(1);
        let bu = eval_basis_1d(&self.knots_u, xi, nd.min(self.knots_u.degree()))?;
        let bv = eval_basis_1d(&self.knots_v, eta, nd.min(self.knots_v.degree()))?;
        Ok(self.combine(&bu, &bv, nd > 0))
    }

    /// Bivariate evaluation from already computed univariate blocks.
    pub fn combine(&self, bu: &BasisEval, bv: &BasisEval, with_derivs: bool) -> SpaceEval {
        let (lu, lv) = (bu.ders[0].len(), bv.ders[0].len());
        let m = self.m();
        let zero_u = vec![0.0; lu];
        let zero_v = vec![0.0; lv];
        let du = if with_derivs && bu.ders.len() > 1 { &bu.ders[1] } else { &zero_u };
        let dv = if with_derivs && bv.ders.len() > 1 { &bv.ders[1] } else { &zero_v };
        let mut values = Vec::with_capacity(lu * lv);
        let mut d_xi = Vec::with_capacity(lu * lv);
        let mut d_eta = Vec::with_capacity(lu * lv);
        for a in 0..lu {
            for b in 0..lv {
                values.push(bu.ders[0][a] * bv.ders[0][b]);
                d_xi.push(du[a] * bv.ders[0][b]);
                d_eta.push(bu.ders[0][a] * dv[b]);
            }
        }
        let mut weight = 1.0;
        let mut weight_grad = [0.0, 0.0];
        if let Some(w) = &self.weights {
            let mut wsum = 0.0;
            let mut gx = 0.0;
            let mut gy = 0.0;
            for a in 0..lu {
                for b in 0..lv {
                    let l = a * lv + b;
                    let wk = w[(bu.first + a) * m + bv.first + b];
                    values[l] *= wk;
                    d_xi[l] *= wk;
                    d_eta[l] *= wk;
                    wsum += values[l];
                    gx += d_xi[l];
                    gy += d_eta[l];
                }
            }
            for l in 0..values.len() {
                let v = values[l];
                values[l] = v / wsum;
                d_xi[l] = (d_xi[l] * wsum - v * gx) / (wsum * wsum);
                d_eta[l] = (d_eta[l] * wsum - v * gy) / (wsum * wsum);
            }
            weight = wsum;
            weight_grad = [gx, gy];
        }
        SpaceEval {
            first_u: bu.first,
            first_v: bv.first,
            len_u: lu,
            len_v: lv,
            values,
            d_xi,
            d_eta,
            weight,
            weight_grad,
        }
    }
}

/// Grid of control points with positive weights, flattened `i * m + j`.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlNet {
    pub n: usize,
    pub m: usize,
    pub points: Vec<[f64; 3]>,
    pub weights: Vec<f64>,
}

impl ControlNet {
    pub fn new(n: usize, m: usize, points: Vec<[f64; 3]>, weights: Vec<f64>) -> Result<Self> {
        if points.len() != n * m || weights.len() != n * m {
            return Err(SplineError::NetDimension {
                expected: n * m,
                found: points.len().min(weights.len()),
            });
        }
        if let Some((index, &weight)) = weights.iter().enumerate().find(|(_, &w)| !(w > 0.0)) {
            return Err(SplineError::NonPositiveWeight { index, weight });
        }
        Ok(Self {
            n,
            m,
            points,
            weights,
        })
    }

    pub fn is_polynomial(&self) -> bool {
        self.weights.iter().all(|&w| w == 1.0)
    }

    fn homogeneous(&self) -> Vec<[f64; 4]> {
        self.points
            .iter()
            .zip(&self.weights)
            .map(|(p, &w)| [p[0] * w, p[1] * w, p[2] * w, w])
            .collect()
    }

    fn from_homogeneous(n: usize, m: usize, h: &[[f64; 4]]) -> Self {
        let points = h.iter().map(|q| [q[0] / q[3], q[1] / q[3], q[2] / q[3]]).collect();
        let weights = h.iter().map(|q| q[3]).collect();
        Self {
            n,
            m,
            points,
            weights,
        }
    }
}

/// Result of [`SurfacePatch::eval`].
#[derive(Debug, Clone)]
pub struct SurfaceEval {
    pub basis: SpaceEval,
    pub point: [f64; 3],
    /// `jacobian[r][c] = ∂x_r / ∂ξ_c` for the in-plane coordinates.
    pub jacobian: [[f64; 2]; 2],
    pub det: f64,
}

impl SurfaceEval {
    /// Physical gradients `(∂R/∂x, ∂R/∂y)` of the nonzero functions.
    pub fn physical_gradients(&self) -> (Vec<f64>, Vec<f64>) {
        let j = &self.jacobian;
        let inv_det = 1.0 / self.det;
        // J^{-T}
        let a = [[j[1][1] * inv_det, -j[1][0] * inv_det], [-j[0][1] * inv_det, j[0][0] * inv_det]];
        let b = &self.basis;
        let dx = b
            .d_xi
            .iter()
            .zip(&b.d_eta)
            .map(|(&u, &v)| a[0][0] * u + a[0][1] * v)
            .collect();
        let dy = b
            .d_xi
            .iter()
            .zip(&b.d_eta)
            .map(|(&u, &v)| a[1][0] * u + a[1][1] * v)
            .collect();
        (dx, dy)
    }
}

/// A single NURBS surface patch.
#[derive(Debug, Clone, PartialEq)]
pub struct SurfacePatch {
    space: TensorSpace,
    net: ControlNet,
}

impl SurfacePatch {
    pub fn new(knots_u: KnotVector, knots_v: KnotVector, net: ControlNet) -> Result<Self> {
        let (n, m) = (knots_u.num_basis(), knots_v.num_basis());
        if net.n != n || net.m != m {
            return Err(SplineError::NetDimension {
                expected: n * m,
                found: net.n * net.m,
            });
        }
        let space = TensorSpace::new(knots_u, knots_v, Some(net.weights.clone()))?;
        Ok(Self { space, net })
    }

    pub fn knots_u(&self) -> &KnotVector {
        &self.space.knots_u
    }

    pub fn knots_v(&self) -> &KnotVector {
        &self.space.knots_v
    }

    pub fn net(&self) -> &ControlNet {
        &self.net
    }

    pub fn space(&self) -> &TensorSpace {
        &self.space
    }

    pub fn degrees(&self) -> (usize, usize) {
        self.space.degrees()
    }

    pub fn n(&self) -> usize {
        self.net.n
    }

    pub fn m(&self) -> usize {
        self.net.m
    }

    /// Basis functions, mapped point and Jacobian at `(xi, eta)`.
    pub fn eval(&self, xi: f64, eta: f64) -> Result<SurfaceEval> {
        let basis = self.space.eval(xi, eta, 1)?;
        Ok(self.finish_eval(basis))
    }

    pub(crate) fn finish_eval(&self, basis: SpaceEval) -> SurfaceEval {
        let mut point = [0.0; 3];
        let mut jac = [[0.0; 2]; 2];
        for (l, k) in basis.indices(self.net.m).enumerate() {
            let p = &self.net.points[k];
            for r in 0..3 {
                point[r] += basis.values[l] * p[r];
            }
            for r in 0..2 {
                jac[r][0] += basis.d_xi[l] * p[r];
                jac[r][1] += basis.d_eta[l] * p[r];
            }
        }
        let det = jac[0][0] * jac[1][1] - jac[0][1] * jac[1][0];
        SurfaceEval {
            basis,
            point,
            jacobian: jac,
            det,
        }
    }

    /// Mapped point only.
    pub fn point(&self, xi: f64, eta: f64) -> Result<[f64; 3]> {
        Ok(self.eval(xi, eta)?.point)
    }

    /// Parametric elements as `((u0, u1), (v0, v1))`, ξ outer.
    pub fn elements(&self) -> Vec<((f64, f64), (f64, f64))> {
        let eu = self.knots_u().elements();
        let ev = self.knots_v().elements();
        eu.iter()
            .flat_map(|&u| ev.iter().map(move |&v| (u, v)))
            .collect()
    }

    /// Control point indices on the four edges: ξ = start, ξ = end,
    /// η = start, η = end.
    pub fn edge(&self, side: Side) -> Vec<usize> {
        let (n, m) = (self.n(), self.m());
        match side {
            Side::UMin => (0..m).collect(),
            Side::UMax => (0..m).map(|j| (n - 1) * m + j).collect(),
            Side::VMin => (0..n).map(|i| i * m).collect(),
            Side::VMax => (0..n).map(|i| i * m + m - 1).collect(),
        }
    }

    /// Knot vector running along the given edge.
    pub fn edge_knots(&self, side: Side) -> &KnotVector {
        match side {
            Side::UMin | Side::UMax => self.knots_v(),
            Side::VMin | Side::VMax => self.knots_u(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Side {
    UMin,
    UMax,
    VMin,
    VMax,
}

impl Side {
    pub const ALL: [Side; 4] = [Side::UMin, Side::UMax, Side::VMin, Side::VMax];
}

/// One (ordered) knot value with its continuity across it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KnotContinuity {
    pub value: f64,
    pub multiplicity: usize,
    /// `p - c`; `-1` marks a discontinuity.
    pub continuity: isize,
}

/// Multiplicity and continuity of every distinct interior knot.
pub fn continuity_profile(kv: &KnotVector) -> Vec<KnotContinuity> {
    kv.interior()
        .into_iter()
        .map(|(value, multiplicity)| KnotContinuity {
            value,
            multiplicity,
            continuity: kv.degree as isize - multiplicity as isize,
        })
        .collect()
}

// Boehm insertion of a single knot into a homogeneous control polygon.
fn insert_one(kv: &KnotVector, pts: &[[f64; 4]], x: f64) -> (Vec<f64>, Vec<[f64; 4]>) {
    let u = &kv.values;
    let p = kv.degree;
    let n = kv.num_basis();
    // largest k with u[k] <= x
    let k = u.iter().rposition(|&v| v <= x).unwrap();
    let mut q = Vec::with_capacity(n + 1);
    for i in 0..=n {
        if i + p <= k {
            q.push(pts[i]);
        } else if i >= k + 1 {
            q.push(pts[i - 1]);
        } else {
            let alpha = (x - u[i]) / (u[i + p] - u[i]);
            let mut v = [0.0; 4];
            for c in 0..4 {
                v[c] = alpha * pts[i][c] + (1.0 - alpha) * pts[i - 1][c];
            }
            q.push(v);
        }
    }
    let mut values = u.clone();
    values.insert(k + 1, x);
    (values, q)
}

fn check_insertion(kv: &KnotVector, knots: &[f64]) -> Result<()> {
    let mut counts = std::collections::BTreeMap::new();
    for &x in knots {
        if !(x > kv.first() && x < kv.last()) {
            return Err(SplineError::KnotOutsideDomain { value: x });
        }
        *counts.entry(x.to_bits()).or_insert(0usize) += 1;
    }
    for (bits, added) in counts {
        let x = f64::from_bits(bits);
        if kv.multiplicity(x) + added > kv.degree {
            return Err(SplineError::MultiplicityOverflow {
                value: x,
                max: kv.degree,
            });
        }
    }
    Ok(())
}

/// Applies a curve operation to every row (direction u) or column
/// (direction v) of a homogeneous net.
fn map_lines<F>(h: &[[f64; 4]], n: usize, m: usize, along_u: bool, mut f: F) -> (usize, usize, Vec<[f64; 4]>)
where
    F: FnMut(&[[f64; 4]]) -> Vec<[f64; 4]>,
{
    if along_u {
        let mut lines = Vec::with_capacity(m);
        for j in 0..m {
            let line: Vec<_> = (0..n).map(|i| h[i * m + j]).collect();
            lines.push(f(&line));
        }
        let n2 = lines[0].len();
        let mut out = vec![[0.0; 4]; n2 * m];
        for (j, line) in lines.iter().enumerate() {
            for (i, q) in line.iter().enumerate() {
                out[i * m + j] = *q;
            }
        }
        (n2, m, out)
    } else {
        let mut out = Vec::new();
        let mut m2 = m;
        for i in 0..n {
            let line = f(&h[i * m..(i + 1) * m]);
            m2 = line.len();
            out.extend(line);
        }
        (n, m2, out)
    }
}

fn insert_curve(kv: &KnotVector, pts: &[[f64; 4]], knots: &[f64]) -> (KnotVector, Vec<[f64; 4]>) {
    let mut sorted = knots.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mut cur = kv.clone();
    let mut cp = pts.to_vec();
    for &x in &sorted {
        let (values, q) = insert_one(&cur, &cp, x);
        cur = KnotVector {
            values,
            degree: cur.degree,
        };
        cp = q;
    }
    (cur, cp)
}

/// Inserts knots in both parametric directions without changing the surface.
pub fn insert_knots(patch: &SurfacePatch, new_u: &[f64], new_v: &[f64]) -> Result<SurfacePatch> {
    check_insertion(patch.knots_u(), new_u)?;
    check_insertion(patch.knots_v(), new_v)?;
    let h = patch.net.homogeneous();
    let (n, m) = (patch.n(), patch.m());
    let mut ku = patch.knots_u().clone();
    let (n1, m1, h1) = map_lines(&h, n, m, true, |line| {
        let (k, q) = insert_curve(patch.knots_u(), line, new_u);
        ku = k;
        q
    });
    let mut kv = patch.knots_v().clone();
    let (n2, m2, h2) = map_lines(&h1, n1, m1, false, |line| {
        let (k, q) = insert_curve(patch.knots_v(), line, new_v);
        kv = k;
        q
    });
    SurfacePatch::new(ku, kv, ControlNet::from_homogeneous(n2, m2, &h2))
}

/// Knot vector of the same spline space elevated by `dp` degrees, keeping
/// the continuity at every interior knot.
pub fn elevated_knots(kv: &KnotVector, dp: usize) -> KnotVector {
    let mut values = Vec::new();
    for (v, c) in kv.distinct() {
        values.extend(std::iter::repeat(v).take(c + dp));
    }
    KnotVector {
        values,
        degree: kv.degree + dp,
    }
}

/// Gram matrix `∫ N_i N_k` of a knot vector, dense.
pub(crate) fn gram_dense(kv: &KnotVector) -> DMatrix<f64> {
    let n = kv.num_basis();
    let p = kv.degree;
    let rule = GaussLegendre::new(p + 1);
    let mut g = DMatrix::zeros(n, n);
    for (a, b) in kv.elements() {
        for (x, w) in rule.mapped(a, b) {
            let be = eval_basis_1d(kv, x, 0).expect("quadrature point inside domain");
            let vals = be.values();
            for (r, &vr) in vals.iter().enumerate() {
                for (c, &vc) in vals.iter().enumerate() {
                    g[(be.first + r, be.first + c)] += w * vr * vc;
                }
            }
        }
    }
    g
}

fn elevate_curve(kv: &KnotVector, pts: &[[f64; 4]], dp: usize) -> (KnotVector, Vec<[f64; 4]>) {
    if dp == 0 {
        return (kv.clone(), pts.to_vec());
    }
    let target = elevated_knots(kv, dp);
    let g = gram_dense(&target);
    let chol = g.cholesky().expect("B-spline Gram matrix is SPD");
    let n2 = target.num_basis();
    let rule = GaussLegendre::new(target.degree + 1);
    let mut rhs = DMatrix::zeros(n2, 4);
    for (a, b) in target.elements() {
        for (x, w) in rule.mapped(a, b) {
            // evaluate old curve on the same span (right-continuous inside)
            let old = eval_basis_1d(kv, x, 0).expect("inside domain");
            let mut c = [0.0; 4];
            for (l, &v) in old.values().iter().enumerate() {
                for r in 0..4 {
                    c[r] += v * pts[old.first + l][r];
                }
            }
            let new = eval_basis_1d(&target, x, 0).expect("inside domain");
            for (l, &v) in new.values().iter().enumerate() {
                for r in 0..4 {
                    rhs[(new.first + l, r)] += w * v * c[r];
                }
            }
        }
    }
    let sol = chol.solve(&rhs);
    let q = (0..n2).map(|i| [sol[(i, 0)], sol[(i, 1)], sol[(i, 2)], sol[(i, 3)]]).collect();
    (target, q)
}

/// Raises the degrees by `(dp, dq)`, keeping geometry and continuity.
pub fn elevate_degree(patch: &SurfacePatch, dp: usize, dq: usize) -> Result<SurfacePatch> {
    if dp == 0 && dq == 0 {
        return Ok(patch.clone());
    }
    let h = patch.net.homogeneous();
    let (n, m) = (patch.n(), patch.m());
    let mut ku = patch.knots_u().clone();
    let (n1, m1, h1) = map_lines(&h, n, m, true, |line| {
        let (k, q) = elevate_curve(patch.knots_u(), line, dp);
        ku = k;
        q
    });
    let mut kv = patch.knots_v().clone();
    let (n2, m2, h2) = map_lines(&h1, n1, m1, false, |line| {
        let (k, q) = elevate_curve(patch.knots_v(), line, dq);
        kv = k;
        q
    });
    SurfacePatch::new(ku, kv, ControlNet::from_homogeneous(n2, m2, &h2))
}
