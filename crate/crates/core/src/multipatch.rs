//! Conforming multi-patch meshes.
//!
//! Deflection and rotation DOFs of coincident control points on shared
//! edges are merged, which gives C⁰ coupling. Shear DOFs are numbered per
//! patch and never shared.

use thiserror::Error;

use crate::plate::FieldSpaces;
use crate::spline::{Side, SurfacePatch};

/// Control points on a shared edge must coincide to this distance (m).
pub const INTERFACE_TOL: f64 = 1e-12;

/// Edges whose end points are this close (relative to the mesh size) are
/// compared in detail; a mismatch beyond [`INTERFACE_TOL`] is then an error.
const CANDIDATE_REL_TOL: f64 = 1e-3;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MultipatchError {
    #[error("non-conforming interface between patch {patch_a} ({side_a:?}) and patch {patch_b} ({side_b:?}): {reason}")]
    NonConformingInterface {
        patch_a: usize,
        side_a: Side,
        patch_b: usize,
        side_b: Side,
        reason: String,
    },
    #[error("empty patch list")]
    NoPatches,
}

/// Two patch edges identified with each other.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Interface {
    pub patch_a: usize,
    pub side_a: Side,
    pub patch_b: usize,
    pub side_b: Side,
    /// The edges run in opposite parametric directions.
    pub reversed: bool,
}

/// Refined patches with a global DOF numbering.
#[derive(Debug, Clone)]
pub struct PatchAssembly {
    pub spaces: Vec<FieldSpaces>,
    pub interfaces: Vec<Interface>,
    /// Global control point index of each patch-local control point.
    pub cp_map: Vec<Vec<usize>>,
    /// Number of distinct control points.
    pub n_cp: usize,
    /// Offset of each patch's shear block within the `S₁` and `S₂` vectors.
    pub shear_offsets: [Vec<usize>; 2],
    pub n_shear: [usize; 2],
    /// Whether a global control point lies on the clamped outer boundary.
    pub boundary: Vec<bool>,
}

impl PatchAssembly {
    pub fn n_patches(&self) -> usize {
        self.spaces.len()
    }

    /// Number of displacement and rotation DOFs before boundary conditions.
    pub fn n_disp(&self) -> usize {
        3 * self.n_cp
    }

    /// Global shear index range of one patch.
    pub fn shear_range(&self, alpha: usize, patch: usize) -> std::ops::Range<usize> {
        let start = self.shear_offsets[alpha][patch];
        start..start + self.spaces[patch].n_shear(alpha)
    }
}

fn dist(a: [f64; 3], b: [f64; 3]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt()
}

fn edge_points(patch: &SurfacePatch, side: Side) -> Vec<([f64; 3], f64)> {
    let net = patch.net();
    patch
        .edge(side)
        .into_iter()
        .map(|k| (net.points[k], net.weights[k]))
        .collect()
}

fn bbox_diagonal(patches: &[&SurfacePatch]) -> f64 {
    let mut lo = [f64::INFINITY; 3];
    let mut hi = [f64::NEG_INFINITY; 3];
    for p in patches {
        for x in &p.net().points {
            for c in 0..3 {
                lo[c] = lo[c].min(x[c]);
                hi[c] = hi[c].max(x[c]);
            }
        }
    }
    dist(lo, hi).max(f64::MIN_POSITIVE)
}

/// Checks a candidate edge pair in detail.
fn match_edges(
    pa: &SurfacePatch,
    sa: Side,
    pb: &SurfacePatch,
    sb: Side,
    reversed: bool,
) -> Result<(), String> {
    let ka = pa.edge_knots(sa);
    let kb = pb.edge_knots(sb);
    if ka.degree() != kb.degree() {
        return Err(format!("degrees {} and {} differ", ka.degree(), kb.degree()));
    }
    if ka.num_basis() != kb.num_basis() {
        return Err(format!("{} and {} edge control points", ka.num_basis(), kb.num_basis()));
    }
    // knots are compared after mapping both edges to [0, 1]
    let norm = |k: &crate::spline::KnotVector, x: f64| (x - k.first()) / k.domain_length();
    let va = ka.values();
    let vb = kb.values();
    let len = va.len();
    for i in 0..len {
        let b = if reversed {
            1.0 - norm(kb, vb[len - 1 - i])
        } else {
            norm(kb, vb[i])
        };
        if (norm(ka, va[i]) - b).abs() > 1e-12 {
            return Err(format!("knot {i} differs ({} vs {b})", norm(ka, va[i])));
        }
    }
    let ea = edge_points(pa, sa);
    let mut eb = edge_points(pb, sb);
    if reversed {
        eb.reverse();
    }
    for (k, ((xa, wa), (xb, wb))) in ea.iter().zip(&eb).enumerate() {
        let d = dist(*xa, *xb);
        if d > INTERFACE_TOL {
            return Err(format!("control point {k} is {d:e} m apart"));
        }
        if (wa - wb).abs() > INTERFACE_TOL * wa.abs().max(1.0) {
            return Err(format!("weight of control point {k} differs ({wa} vs {wb})"));
        }
    }
    Ok(())
}

/// Finds all shared edges. Candidates are edge pairs with matching end
/// points; each candidate must then match exactly.
pub fn detect_interfaces(patches: &[&SurfacePatch]) -> Result<Vec<Interface>, MultipatchError> {
    let tol = CANDIDATE_REL_TOL * bbox_diagonal(patches);
    let mut out = Vec::new();
    for a in 0..patches.len() {
        for b in a + 1..patches.len() {
            for sa in Side::ALL {
                let ea = edge_points(patches[a], sa);
                let (a0, a1) = (ea[0].0, ea[ea.len() - 1].0);
                for sb in Side::ALL {
                    let eb = edge_points(patches[b], sb);
                    let (b0, b1) = (eb[0].0, eb[eb.len() - 1].0);
                    let reversed = if dist(a0, b0) < tol && dist(a1, b1) < tol {
                        false
                    } else if dist(a0, b1) < tol && dist(a1, b0) < tol {
                        true
                    } else {
                        continue;
                    };
                    match_edges(patches[a], sa, patches[b], sb, reversed).map_err(|reason| {
                        MultipatchError::NonConformingInterface {
                            patch_a: a,
                            side_a: sa,
                            patch_b: b,
                            side_b: sb,
                            reason,
                        }
                    })?;
                    out.push(Interface {
                        patch_a: a,
                        side_a: sa,
                        patch_b: b,
                        side_b: sb,
                        reversed,
                    });
                }
            }
        }
    }
    Ok(out)
}

fn find(parent: &mut [usize], mut x: usize) -> usize {
    while parent[x] != x {
        parent[x] = parent[parent[x]];
        x = parent[x];
    }
    x
}

/// Global numbering of the refined patches. Interfaces are detected from
/// coincident edges.
pub fn build_dof_map(spaces: Vec<FieldSpaces>) -> Result<PatchAssembly, MultipatchError> {
    if spaces.is_empty() {
        return Err(MultipatchError::NoPatches);
    }
    let geos: Vec<&SurfacePatch> = spaces.iter().map(|s| &s.geometry).collect();
    let interfaces = detect_interfaces(&geos)?;

    let mut offsets = Vec::with_capacity(geos.len());
    let mut total = 0;
    for g in &geos {
        offsets.push(total);
        total += g.n() * g.m();
    }
    let mut parent: Vec<usize> = (0..total).collect();
    for itf in &interfaces {
        let ea = geos[itf.patch_a].edge(itf.side_a);
        let mut eb = geos[itf.patch_b].edge(itf.side_b);
        if itf.reversed {
            eb.reverse();
        }
        for (&i, &j) in ea.iter().zip(&eb) {
            let ri = find(&mut parent, offsets[itf.patch_a] + i);
            let rj = find(&mut parent, offsets[itf.patch_b] + j);
            // the smaller index stays the root so numbering follows input order
            if ri < rj {
                parent[rj] = ri;
            } else if rj < ri {
                parent[ri] = rj;
            }
        }
    }
    let mut number = vec![usize::MAX; total];
    let mut n_cp = 0;
    let mut cp_map = Vec::with_capacity(geos.len());
    for (p, g) in geos.iter().enumerate() {
        let mut map = Vec::with_capacity(g.n() * g.m());
        for k in 0..g.n() * g.m() {
            let root = find(&mut parent, offsets[p] + k);
            if number[root] == usize::MAX {
                number[root] = n_cp;
                n_cp += 1;
            }
            map.push(number[root]);
        }
        cp_map.push(map);
    }

    let mut boundary = vec![false; n_cp];
    for (p, g) in geos.iter().enumerate() {
        for side in Side::ALL {
            let shared = interfaces
                .iter()
                .any(|i| (i.patch_a == p && i.side_a == side) || (i.patch_b == p && i.side_b == side));
            if !shared {
                for k in g.edge(side) {
                    boundary[cp_map[p][k]] = true;
                }
            }
        }
    }

    let mut shear_offsets: [Vec<usize>; 2] = [Vec::new(), Vec::new()];
    let mut n_shear = [0, 0];
    for a in 0..2 {
        for s in &spaces {
            shear_offsets[a].push(n_shear[a]);
            n_shear[a] += s.n_shear(a);
        }
    }
    Ok(PatchAssembly {
        spaces,
        interfaces,
        cp_map,
        n_cp,
        shear_offsets,
        n_shear,
        boundary,
    })
}
