#![allow(dead_code)]

use std::collections::BTreeMap;

use igaplate::bench::problem::{load_function, POISSON, SHEAR_CORRECTION, YOUNG};
use igaplate::dual::DualTransform1D;
use igaplate::plate::material;
use igaplate::quadrature::GaussLegendre;
use igaplate::spline::{eval_basis_1d, insert_knots, elevate_degree, KnotVector, SurfacePatch};

/// Bivariate polynomial, `coef[(i, j)]` multiplies `x^i y^j`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Poly {
    coef: BTreeMap<(u32, u32), f64>,
}

impl Poly {
    pub fn constant(c: f64) -> Self {
        Self::monomial(c, 0, 0)
    }

    pub fn monomial(c: f64, i: u32, j: u32) -> Self {
        let mut coef = BTreeMap::new();
        coef.insert((i, j), c);
        Self { coef }
    }

    pub fn x() -> Self {
        Self::monomial(1.0, 1, 0)
    }

    pub fn y() -> Self {
        Self::monomial(1.0, 0, 1)
    }

    pub fn add(&self, o: &Poly) -> Poly {
        let mut out = self.clone();
        for (&k, &v) in &o.coef {
            *out.coef.entry(k).or_insert(0.0) += v;
        }
        out
    }

    pub fn sub(&self, o: &Poly) -> Poly {
        self.add(&o.scale(-1.0))
    }

    pub fn scale(&self, s: f64) -> Poly {
        Poly {
            coef: self.coef.iter().map(|(&k, &v)| (k, v * s)).collect(),
        }
    }

    pub fn mul(&self, o: &Poly) -> Poly {
        let mut out = Poly::default();
        for (&(a, b), &u) in &self.coef {
            for (&(c, d), &v) in &o.coef {
                *out.coef.entry((a + c, b + d)).or_insert(0.0) += u * v;
            }
        }
        out
    }

    pub fn pow(&self, n: u32) -> Poly {
        (0..n).fold(Poly::constant(1.0), |acc, _| acc.mul(self))
    }

    pub fn dx(&self) -> Poly {
        Poly {
            coef: self
                .coef
                .iter()
                .filter(|(&(i, _), _)| i > 0)
                .map(|(&(i, j), &v)| ((i - 1, j), v * i as f64))
                .collect(),
        }
    }

    pub fn dy(&self) -> Poly {
        Poly {
            coef: self
                .coef
                .iter()
                .filter(|(&(_, j), _)| j > 0)
                .map(|(&(i, j), &v)| ((i, j - 1), v * j as f64))
                .collect(),
        }
    }

    pub fn eval(&self, x: f64, y: f64) -> f64 {
        self.coef.iter().map(|(&(i, j), &v)| v * x.powi(i as i32) * y.powi(j as i32)).sum()
    }
}

/// Largest strong-form residual of the closed-form plate solution at the
/// given points, relative to the magnitude of the terms involved.
///
/// With `D = E t³ / 12(1−ν²)`, `Θ = ∇w₀` and `Q = κGt (∇w − Θ)` the plate
/// equations read `div Q + f = 0` and `div M + Q = 0`.
pub fn strong_form_residual(t: f64, points: &[(f64, f64)]) -> f64 {
    let nu = POISSON;
    let mat = material(YOUNG, nu, t, SHEAR_CORRECTION).unwrap();
    let d = mat.bending_stiffness();
    let kgt = mat.shear_stiffness();
    let x = Poly::x();
    let y = Poly::y();
    let one = Poly::constant(1.0);
    let xx = x.mul(&x.sub(&one));
    let yy = y.mul(&y.sub(&one));
    let h1 = xx.mul(&yy.scale(5.0).add(&one));
    let h2 = yy.mul(&xx.scale(5.0).add(&one));
    let w0 = xx.pow(3).mul(&yy.pow(3)).scale(1.0 / 3.0);
    let w1 = yy.pow(2).mul(&xx).mul(&h2);
    let w2 = xx.pow(2).mul(&yy).mul(&h1);
    let w = w0.sub(&w1.add(&w2).scale(2.0 * t * t / (5.0 * (1.0 - nu))));
    // unit load amplitude; the solver's F0 scales both sides equally
    let th1 = w0.dx();
    let th2 = w0.dy();
    let q1 = w.dx().sub(&th1).scale(kgt);
    let q2 = w.dy().sub(&th2).scale(kgt);
    let m11 = th1.dx().add(&th2.dy().scale(nu)).scale(d);
    let m22 = th2.dy().add(&th1.dx().scale(nu)).scale(d);
    let m12 = th1.dy().add(&th2.dx()).scale(d * (1.0 - nu) / 2.0);
    let div_q = q1.dx().add(&q2.dy());
    let eq_m1 = m11.dx().add(&m12.dy()).add(&q1);
    let eq_m2 = m12.dx().add(&m22.dy()).add(&q2);
    let f0 = igaplate::bench::problem::F0;
    let mut worst: f64 = 0.0;
    let mut scale_f: f64 = 0.0;
    let mut scale_q: f64 = 0.0;
    let mut res_f: f64 = 0.0;
    let mut res_m: f64 = 0.0;
    for &(a, b) in points {
        let f = load_function(a, b, &mat) / f0;
        scale_f = scale_f.max(f.abs()).max(div_q.eval(a, b).abs());
        scale_q = scale_q.max(q1.eval(a, b).abs()).max(q2.eval(a, b).abs());
        res_f = res_f.max((div_q.eval(a, b) + f).abs());
        res_m = res_m.max(eq_m1.eval(a, b).abs()).max(eq_m2.eval(a, b).abs());
    }
    worst = worst.max(res_f / scale_f).max(res_m / scale_q);
    worst
}

/// `∫ f N_i dξ` for every basis function, with `p + 6` Gauss points per
/// span.
pub fn moments<F: Fn(f64) -> f64>(kv: &KnotVector, f: F) -> Vec<f64> {
    let rule = GaussLegendre::new(kv.degree() + 6);
    let mut out = vec![0.0; kv.num_basis()];
    for (lo, hi) in kv.elements() {
        for (x, w) in rule.mapped(lo, hi) {
            let be = eval_basis_1d(kv, x, 0).unwrap();
            for (l, v) in be.values().iter().enumerate() {
                out[be.first + l] += w * f(x) * v;
            }
        }
    }
    out
}

/// Largest deviation of the dual quasi-interpolant `Σ_j (∫ f λ_j) N_j`
/// from `f` at `samples` evenly spread points, skipping exact knots.
pub fn reproduction_error<F: Fn(f64) -> f64>(s: &DualTransform1D, f: F, samples: usize) -> f64 {
    let kv = &s.knots;
    let b = moments(kv, &f);
    let c: Vec<f64> = (0..kv.num_basis())
        .map(|j| (0..kv.num_basis()).map(|i| s.matrix[(j, i)] * b[i]).sum())
        .collect();
    let (a, len) = (kv.first(), kv.domain_length());
    let mut worst: f64 = 0.0;
    for k in 0..samples {
        let x = a + len * (k as f64 + 0.5) / samples as f64;
        let be = eval_basis_1d(kv, x, 0).unwrap();
        let q: f64 = be.values().iter().enumerate().map(|(l, v)| v * c[be.first + l]).sum();
        worst = worst.max((q - f(x)).abs());
    }
    worst
}

/// `‖a − b‖ / ‖b‖`.
pub fn rel_diff(a: &[f64], b: &[f64]) -> f64 {
    let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let den: f64 = b.iter().map(|y| y * y).sum::<f64>().sqrt();
    num / den
}

/// A coarse patch elevated to degree `p` and split into `nu × nv` uniform
/// elements with full continuity.
pub fn uniform_mesh(coarse: &SurfacePatch, p: usize, nu: usize, nv: usize) -> SurfacePatch {
    let (pu, pv) = coarse.degrees();
    let e = elevate_degree(coarse, p.saturating_sub(pu), p.saturating_sub(pv)).unwrap();
    let ku: Vec<f64> = (1..nu).map(|k| k as f64 / nu as f64).collect();
    let kv: Vec<f64> = (1..nv).map(|k| k as f64 / nv as f64).collect();
    insert_knots(&e, &ku, &kv).unwrap()
}
