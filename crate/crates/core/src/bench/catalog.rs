//! Coarse benchmark geometries of the unit square plate.

use crate::spline::{ControlNet, KnotVector, SplineError, SurfacePatch};

use super::BenchError;

/// Names accepted by [`geometry_catalog`].
pub const GEOMETRY_NAMES: [&str; 7] = [
    "undistorted",
    "nurbs_distorted",
    "c1_single",
    "c0_single",
    "mp_linear",
    "mp_c1",
    "mp_various",
];

/// A named set of coarse patches.
#[derive(Debug, Clone, PartialEq)]
pub struct Geometry {
    pub name: String,
    pub patches: Vec<SurfacePatch>,
}

/// Builds a patch from control rows given η outer, as `(x, y, w)`.
pub fn patch_from_rows(
    p: usize,
    q: usize,
    ku: &[f64],
    kv: &[f64],
    rows: &[[f64; 3]],
) -> Result<SurfacePatch, SplineError> {
    let ku = KnotVector::new(ku.to_vec(), p)?;
    let kv = KnotVector::new(kv.to_vec(), q)?;
    let (n, m) = (ku.num_basis(), kv.num_basis());
    if rows.len() != n * m {
        return Err(SplineError::NetDimension {
            expected: n * m,
            found: rows.len(),
        });
    }
    let mut pts = vec![[0.0; 3]; n * m];
    let mut w = vec![0.0; n * m];
    for j in 0..m {
        for i in 0..n {
            let r = rows[j * n + i];
            pts[i * m + j] = [r[0], r[1], 0.0];
            w[i * m + j] = r[2];
        }
    }
    SurfacePatch::new(ku, kv, ControlNet::new(n, m, pts, w)?)
}

const LIN: [f64; 4] = [0.0, 0.0, 1.0, 1.0];
const QUAD: [f64; 6] = [0.0, 0.0, 0.0, 1.0, 1.0, 1.0];
const QUAD_C1: [f64; 7] = [0.0, 0.0, 0.0, 0.5, 1.0, 1.0, 1.0];
const QUAD_C0: [f64; 8] = [0.0, 0.0, 0.0, 0.5, 0.5, 1.0, 1.0, 1.0];
const CUBIC_VARIOUS: [f64; 14] = [
    0.0, 0.0, 0.0, 0.0, 0.3, 0.3, 0.5, 0.5, 0.5, 0.7, 1.0, 1.0, 1.0, 1.0,
];

/// Splits a three-column net (η outer) into two patches sharing the middle
/// column.
fn two_patches(q: usize, kv: &[f64], rows: &[[f64; 3]]) -> Result<Vec<SurfacePatch>, SplineError> {
    let left: Vec<[f64; 3]> = rows.chunks(3).flat_map(|r| [r[0], r[1]]).collect();
    let right: Vec<[f64; 3]> = rows.chunks(3).flat_map(|r| [r[1], r[2]]).collect();
    Ok(vec![
        patch_from_rows(1, q, &LIN, kv, &left)?,
        patch_from_rows(1, q, &LIN, kv, &right)?,
    ])
}

fn build(name: &str) -> Result<Option<Vec<SurfacePatch>>, SplineError> {
    let patches = match name {
        "undistorted" => vec![patch_from_rows(
            1,
            1,
            &LIN,
            &LIN,
            &[[0.0, 0.0, 1.0], [1.0, 0.0, 1.0], [0.0, 1.0, 1.0], [1.0, 1.0, 1.0]],
        )?],
        "nurbs_distorted" => vec![patch_from_rows(
            2,
            2,
            &QUAD,
            &QUAD,
            &[
                [0.0, 0.0, 1.0],
                [0.5, 0.0, 1.0],
                [1.0, 0.0, 1.0],
                [0.0, 0.5, 1.0],
                [0.3, 0.3, 1.5],
                [1.0, 0.5, 1.0],
                [0.0, 1.0, 1.0],
                [0.5, 1.0, 1.0],
                [1.0, 1.0, 1.0],
            ],
        )?],
        "c1_single" => vec![patch_from_rows(
            2,
            2,
            &QUAD_C1,
            &QUAD_C1,
            &[
                [0.0, 0.0, 1.0],
                [0.25, 0.0, 1.0],
                [0.75, 0.0, 1.0],
                [1.0, 0.0, 1.0],
                [0.0, 0.25, 1.0],
                [0.45, 0.4, 1.0],
                [0.7, 0.2, 1.0],
                [1.0, 0.25, 1.0],
                [0.0, 0.75, 1.0],
                [0.2, 0.9, 1.0],
                [0.5, 0.6, 1.0],
                [1.0, 0.75, 1.0],
                [0.0, 1.0, 1.0],
                [0.25, 1.0, 1.0],
                [0.75, 1.0, 1.0],
                [1.0, 1.0, 1.0],
            ],
        )?],
        "c0_single" => vec![patch_from_rows(
            2,
            2,
            &QUAD_C0,
            &QUAD_C0,
            &[
                [0.0, 0.0, 1.0],
                [0.25, 0.0, 1.0],
                [0.5, 0.0, 1.0],
                [0.75, 0.0, 1.0],
                [1.0, 0.0, 1.0],
                [0.0, 0.25, 1.0],
                [0.25, 0.25, 1.0],
                [0.5, 0.25, 1.0],
                [0.75, 0.25, 1.0],
                [1.0, 0.25, 1.0],
                [0.0, 0.5, 1.0],
                [0.3, 0.55, 1.0],
                [0.45, 0.45, 1.0],
                [0.65, 0.45, 1.0],
                [1.0, 0.5, 1.0],
                [0.0, 0.75, 1.0],
                [0.25, 0.75, 1.0],
                [0.55, 0.6, 1.0],
                [0.65, 0.65, 1.0],
                [1.0, 0.75, 1.0],
                [0.0, 1.0, 1.0],
                [0.25, 1.0, 1.0],
                [0.5, 1.0, 1.0],
                [0.75, 1.0, 1.0],
                [1.0, 1.0, 1.0],
            ],
        )?],
        "mp_linear" => two_patches(
            1,
            &LIN,
            &[
                [0.0, 0.0, 1.0],
                [0.5, 0.0, 1.0],
                [1.0, 0.0, 1.0],
                [0.0, 1.0, 1.0],
                [0.5, 1.0, 1.0],
                [1.0, 1.0, 1.0],
            ],
        )?,
        "mp_c1" => two_patches(
            2,
            &QUAD_C1,
            &[
                [0.0, 0.0, 1.0],
                [0.5, 0.0, 1.0],
                [1.0, 0.0, 1.0],
                [0.0, 0.25, 1.0],
                [0.6, 0.3, 1.0],
                [1.0, 0.25, 1.0],
                [0.0, 0.75, 1.0],
                [0.4, 0.7, 1.0],
                [1.0, 0.75, 1.0],
                [0.0, 1.0, 1.0],
                [0.5, 1.0, 1.0],
                [1.0, 1.0, 1.0],
            ],
        )?,
        "mp_various" => two_patches(
            3,
            &CUBIC_VARIOUS,
            &[
                [0.0, 0.0, 1.0],
                [0.5, 0.0, 1.0],
                [1.0, 0.0, 1.0],
                [0.0, 0.1, 1.0],
                [0.55, 0.1, 1.2],
                [1.0, 0.1, 1.0],
                [0.0, 0.2, 1.0],
                [0.52, 0.2, 1.4],
                [1.0, 0.2, 1.0],
                [0.0, 11.0 / 30.0, 1.0],
                [0.5, 0.32, 0.8],
                [1.0, 11.0 / 30.0, 1.0],
                [0.0, 13.0 / 30.0, 1.0],
                [0.4, 0.45, 1.0],
                [1.0, 13.0 / 30.0, 1.0],
                [0.0, 8.0 / 15.0, 1.0],
                [0.42, 0.55, 1.3],
                [1.0, 8.0 / 15.0, 1.0],
                [0.0, 0.6, 1.0],
                [0.56, 0.69, 1.1],
                [1.0, 0.6, 1.0],
                [0.0, 23.0 / 30.0, 1.0],
                [0.55, 0.8, 1.5],
                [1.0, 23.0 / 30.0, 1.0],
                [0.0, 0.9, 1.0],
                [0.5, 0.95, 0.9],
                [1.0, 0.9, 1.0],
                [0.0, 1.0, 1.0],
                [0.5, 1.0, 1.0],
                [1.0, 1.0, 1.0],
            ],
        )?,
        _ => return Ok(None),
    };
    Ok(Some(patches))
}

/// One of the benchmark geometries by name.
pub fn geometry_catalog(name: &str) -> Result<Geometry, BenchError> {
    match build(name) {
        Ok(Some(patches)) => Ok(Geometry {
            name: name.to_string(),
            patches,
        }),
        Ok(None) => Err(BenchError::UnknownGeometry(name.to_string())),
        Err(e) => Err(BenchError::InvalidGeometry(e.to_string())),
    }
}
