//! Clamped square plate under a polynomial load with a closed-form
//! solution.

use crate::condensation::PlateSolution;
use crate::plate::{material, PlateError, PlateMaterial};
use crate::quadrature::GaussLegendre;
use crate::spline::SplineError;

/// Load amplitude.
pub const F0: f64 = 100.0;
/// Plate edge length (m).
pub const LENGTH: f64 = 1.0;
/// Young's modulus (kN/m²).
pub const YOUNG: f64 = 10000.0;
pub const POISSON: f64 = 0.3;
pub const SHEAR_CORRECTION: f64 = 5.0 / 6.0;

/// Benchmark plate of thickness `t`.
pub fn benchmark_material(t: f64) -> Result<PlateMaterial, PlateError> {
    material(YOUNG, POISSON, t, SHEAR_CORRECTION)
}

fn f_hat(xi: f64, eta: f64) -> (f64, f64) {
    (
        xi * (xi - 1.0) * (5.0 * eta * eta - 5.0 * eta + 1.0),
        eta * (eta - 1.0) * (5.0 * xi * xi - 5.0 * xi + 1.0),
    )
}

/// Transverse pressure (kN/m²) at normalized coordinates `ξ = x/L`,
/// `η = y/L`.
pub fn load_function(xi: f64, eta: f64, mat: &PlateMaterial) -> f64 {
    let (h1, h2) = f_hat(xi, eta);
    let f1 = 12.0 * h2 * (2.0 * eta * eta * (eta - 1.0).powi(2) + h1);
    let f2 = 12.0 * h1 * (2.0 * xi * xi * (xi - 1.0).powi(2) + h2);
    let d = mat.e * (mat.t / LENGTH).powi(3) / (12.0 * (1.0 - mat.nu * mat.nu));
    F0 * d * (f1 + f2)
}

/// Closed-form deflection for a unit load amplitude (m).
pub fn exact_displacement(xi: f64, eta: f64, t: f64, nu: f64) -> f64 {
    let (h1, h2) = f_hat(xi, eta);
    let x = xi * (xi - 1.0);
    let y = eta * (eta - 1.0);
    let w0 = x.powi(3) * y.powi(3) / 3.0;
    let w1 = y * y * x * h2;
    let w2 = x * x * y * h1;
    w0 - 2.0 * t * t / (5.0 * (1.0 - nu)) * (w1 + w2)
}

/// Closed-form rotations for a unit load amplitude.
pub fn exact_rotation(xi: f64, eta: f64) -> [f64; 2] {
    let x = xi * (xi - 1.0);
    let y = eta * (eta - 1.0);
    [
        x * x * (2.0 * xi - 1.0) * y.powi(3),
        y * y * (2.0 * eta - 1.0) * x.powi(3),
    ]
}

/// Deflection of the loaded benchmark plate, `F0` times
/// [`exact_displacement`].
pub fn reference_deflection(x: f64, y: f64, mat: &PlateMaterial) -> f64 {
    F0 * exact_displacement(x / LENGTH, y / LENGTH, mat.t, mat.nu) * LENGTH
}

/// `‖w_h − w‖_L₂` over all patches, with `(p+3)²` Gauss points per element.
pub fn l2_error<F>(sol: &PlateSolution, exact: F) -> Result<f64, SplineError>
where
    F: Fn(f64, f64) -> f64,
{
    let mut sum = 0.0;
    for (p, sp) in sol.assembly.spaces.iter().enumerate() {
        let geo = &sp.geometry;
        let (du, dv) = geo.degrees();
        let (gu, gv) = (GaussLegendre::new(du + 3), GaussLegendre::new(dv + 3));
        let map = &sol.assembly.cp_map[p];
        for ((u0, u1), (v0, v1)) in geo.elements() {
            for (xi, wu) in gu.mapped(u0, u1) {
                for (eta, wv) in gv.mapped(v0, v1) {
                    let ev = geo.eval(xi, eta)?;
                    let wh: f64 = ev
                        .basis
                        .indices(geo.m())
                        .zip(&ev.basis.values)
                        .map(|(k, r)| r * sol.displacement[map[k]])
                        .sum();
                    let e = wh - exact(ev.point[0], ev.point[1]);
                    sum += e * e * wu * wv * ev.det.abs();
                }
            }
        }
    }
    Ok(sum.sqrt())
}
