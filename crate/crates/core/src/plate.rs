//! Mixed Reissner-Mindlin plate discretization.
//!
//! Unknowns are the deflection `w`, the rotations `Θ = (Θ₁, Θ₂)` and the
//! shear forces `S₁`, `S₂`. Deflection and rotations live in the refined
//! geometry space of degree `(p, p)`; `S₁` drops one degree in ξ and `S₂`
//! one degree in η, using the derivative knot vector in the reduced
//! direction.
//!
//! Shear rows are scaled so that the shear-shear blocks are positive
//! (weighted) Gram matrices:
//!
//! ```text
//! K_SS =  ∫ R_S R_S ω            K_Sd = −κGt ∫ R_S (∇R_w − R_Θ) ω
//! ```
//!
//! with `ω = J` for the Galerkin scheme and `ω = W² J_S` for the weighted
//! scheme used by the lumped variants. Displacement rows always integrate
//! over the physical area.

use nalgebra::{DMatrix, DVector, Matrix3};
use rayon::prelude::*;
use thiserror::Error;

use crate::dual::{continuity_reduction_knots, extract_element_transform, ContinuityMode, DualTransform2D};
use crate::linalg::{SparseMatrix, TripletBuilder};
use crate::multipatch::PatchAssembly;
use crate::quadrature::GaussLegendre;
use crate::spline::{
    elevate_degree, eval_basis_1d, insert_knots, SplineError, SurfacePatch, TensorSpace,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PlateError {
    #[error("invalid material: {0}")]
    InvalidMaterial(String),
    #[error("degree {0} is too low for the mixed shear spaces (need at least 2)")]
    DegreeTooLow(usize),
    #[error("non-positive Jacobian {det:e} in patch {patch} at ({xi}, {eta})")]
    DegenerateJacobian {
        patch: usize,
        xi: f64,
        eta: f64,
        det: f64,
    },
    #[error(transparent)]
    Spline(#[from] SplineError),
}

/// Linear elastic, isotropic plate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlateMaterial {
    pub e: f64,
    pub nu: f64,
    pub t: f64,
    pub kappa: f64,
}

/// Validated [`PlateMaterial`].
pub fn material(e: f64, nu: f64, t: f64, kappa: f64) -> Result<PlateMaterial, PlateError> {
    if !(e > 0.0) {
        return Err(PlateError::InvalidMaterial(format!("Young's modulus {e} must be positive")));
    }
    if !(t > 0.0) {
        return Err(PlateError::InvalidMaterial(format!("thickness {t} must be positive")));
    }
    if !(nu > -1.0 && nu < 0.5) {
        return Err(PlateError::InvalidMaterial(format!("Poisson ratio {nu} outside (-1, 0.5)")));
    }
    if !(kappa > 0.0) {
        return Err(PlateError::InvalidMaterial(format!("shear correction {kappa} must be positive")));
    }
    Ok(PlateMaterial { e, nu, t, kappa })
}

impl PlateMaterial {
    pub fn shear_modulus(&self) -> f64 {
        self.e / (2.0 * (1.0 + self.nu))
    }

    /// `E t³ / (12 (1 − ν²))`.
    pub fn bending_stiffness(&self) -> f64 {
        self.e * self.t.powi(3) / (12.0 * (1.0 - self.nu * self.nu))
    }

    /// `κ G t`, the single entry of the diagonal shear matrix.
    pub fn shear_stiffness(&self) -> f64 {
        self.kappa * self.shear_modulus() * self.t
    }

    pub fn d_m(&self) -> Matrix3<f64> {
        let nu = self.nu;
        Matrix3::new(1.0, nu, 0.0, nu, 1.0, 0.0, 0.0, 0.0, 0.5 * (1.0 - nu)) * self.bending_stiffness()
    }

    pub fn d_s(&self) -> nalgebra::Matrix2<f64> {
        nalgebra::Matrix2::identity() * self.shear_stiffness()
    }
}

/// Weights attached to the shear test and trial functions.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ShearWeights {
    /// Rational shear functions with weights sampled from the geometry.
    Nurbs,
    /// Plain B-splines.
    Bspline,
}

/// Integration weighting of the shear rows.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scheme {
    Galerkin,
    Weighted,
}

/// Refined interpolation spaces of one patch.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldSpaces {
    /// Geometry after k-refinement; deflection and rotations use its basis.
    pub geometry: SurfacePatch,
    /// `S₁` (reduced in ξ) and `S₂` (reduced in η).
    pub shear: [TensorSpace; 2],
    pub shear_weights: ShearWeights,
}

impl FieldSpaces {
    pub fn n_disp(&self) -> usize {
        self.geometry.n() * self.geometry.m()
    }

    pub fn n_shear(&self, alpha: usize) -> usize {
        self.shear[alpha].dim()
    }

    /// Elements as pairs of span intervals, ξ outer.
    pub fn elements(&self) -> Vec<((f64, f64), (f64, f64))> {
        self.geometry.elements()
    }

    /// Elements per parametric direction.
    pub fn elements_per_dir(&self) -> (usize, usize) {
        (
            self.geometry.knots_u().elements().len(),
            self.geometry.knots_v().elements().len(),
        )
    }
}

/// k-refinement of a coarse patch followed by construction of the shear
/// spaces.
///
/// The geometry is elevated to degree `max(target_p, coarse degree)` in each
/// direction, interior continuity is reduced if `continuity` is given, and
/// every coarse span is then split into `2^level` equal parts.
pub fn build_field_spaces(
    patch: &SurfacePatch,
    target_p: usize,
    level: u32,
    continuity: Option<ContinuityMode>,
    shear_weights: ShearWeights,
) -> Result<FieldSpaces, PlateError> {
    if target_p < 2 {
        return Err(PlateError::DegreeTooLow(target_p));
    }
    let (p0, q0) = patch.degrees();
    let mut geo = elevate_degree(patch, target_p.saturating_sub(p0), target_p.saturating_sub(q0))?;
    if let Some(mode) = continuity {
        let ku = continuity_reduction_knots(geo.knots_u(), mode);
        let kv = continuity_reduction_knots(geo.knots_v(), mode);
        if !ku.is_empty() || !kv.is_empty() {
            geo = insert_knots(&geo, &ku, &kv)?;
        }
    }
    let ku = geo.knots_u().dyadic_refinement(level);
    let kv = geo.knots_v().dyadic_refinement(level);
    if !ku.is_empty() || !kv.is_empty() {
        geo = insert_knots(&geo, &ku, &kv)?;
    }
    let shear = [
        shear_space(&geo, geo.knots_u().derivative_space()?, geo.knots_v().clone(), shear_weights)?,
        shear_space(&geo, geo.knots_u().clone(), geo.knots_v().derivative_space()?, shear_weights)?,
    ];
    Ok(FieldSpaces {
        geometry: geo,
        shear,
        shear_weights,
    })
}

fn shear_space(
    geo: &SurfacePatch,
    ku: crate::spline::KnotVector,
    kv: crate::spline::KnotVector,
    mode: ShearWeights,
) -> Result<TensorSpace, PlateError> {
    let weights = match mode {
        ShearWeights::Bspline => None,
        ShearWeights::Nurbs => {
            if geo.net().is_polynomial() {
                Some(vec![1.0; ku.num_basis() * kv.num_basis()])
            } else {
                // geometry weight function at the shear Greville points
                let gu = ku.greville();
                let gv = kv.greville();
                let mut w = Vec::with_capacity(gu.len() * gv.len());
                for &x in &gu {
                    for &y in &gv {
                        w.push(geo.eval(x, y)?.basis.weight);
                    }
                }
                Some(w)
            }
        }
    };
    Ok(TensorSpace::new(ku, kv, weights)?)
}

/// Dense element blocks with local ordering `[w.., Θ₁.., Θ₂..]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ElementMatrices {
    /// Local indices of the displacement basis functions in the patch.
    pub conn_d: Vec<usize>,
    /// Local indices of the shear basis functions in the patch.
    pub conn_s: [Vec<usize>; 2],
    pub k_dd: DMatrix<f64>,
    pub k_ds: [DMatrix<f64>; 2],
    pub k_sd: [DMatrix<f64>; 2],
    pub k_ss: [DMatrix<f64>; 2],
    pub f_w: DVector<f64>,
}

/// Quadrature points per direction used for assembly.
fn assembly_points(spaces: &FieldSpaces) -> (usize, usize) {
    let (p, q) = spaces.geometry.degrees();
    (p + 1, q + 1)
}

struct QuadPoint {
    xi: f64,
    eta: f64,
    /// parent-to-parametric weight including `J_S`
    weight: f64,
}

fn element_points(elem: ((f64, f64), (f64, f64)), nq: (usize, usize)) -> Vec<QuadPoint> {
    let (ru, rv) = (GaussLegendre::new(nq.0), GaussLegendre::new(nq.1));
    let mut out = Vec::with_capacity(nq.0 * nq.1);
    for (xi, wu) in ru.mapped(elem.0 .0, elem.0 .1) {
        for (eta, wv) in rv.mapped(elem.1 .0, elem.1 .1) {
            out.push(QuadPoint {
                xi,
                eta,
                weight: wu * wv,
            });
        }
    }
    out
}

/// Element blocks of the mixed formulation.
pub fn element_matrices<F>(
    elem: ((f64, f64), (f64, f64)),
    spaces: &FieldSpaces,
    mat: &PlateMaterial,
    scheme: Scheme,
    load: &F,
) -> Result<ElementMatrices, PlateError>
where
    F: Fn(f64, f64) -> f64 + ?Sized,
{
    element_matrices_impl(elem, spaces, mat, Some(scheme), load, 0)
}

/// Element stiffness of the primal (displacement-only) formulation, with
/// both bending and shear in `k_dd`; shear blocks are empty.
pub fn primal_element_matrices<F>(
    elem: ((f64, f64), (f64, f64)),
    spaces: &FieldSpaces,
    mat: &PlateMaterial,
    load: &F,
) -> Result<ElementMatrices, PlateError>
where
    F: Fn(f64, f64) -> f64 + ?Sized,
{
    element_matrices_impl(elem, spaces, mat, None, load, 0)
}

fn element_matrices_impl<F>(
    elem: ((f64, f64), (f64, f64)),
    spaces: &FieldSpaces,
    mat: &PlateMaterial,
    scheme: Option<Scheme>,
    load: &F,
    patch_index: usize,
) -> Result<ElementMatrices, PlateError>
where
    F: Fn(f64, f64) -> f64 + ?Sized,
{
    let geo = &spaces.geometry;
    let mid = (0.5 * (elem.0 .0 + elem.0 .1), 0.5 * (elem.1 .0 + elem.1 .1));
    // connectivity from the element midpoint (same spans as all interior points)
    let e0 = geo.eval(mid.0, mid.1)?;
    let conn_d: Vec<usize> = e0.basis.indices(geo.m()).collect();
    let k = conn_d.len();
    let nd = 3 * k;
    let mut conn_s: [Vec<usize>; 2] = [Vec::new(), Vec::new()];
    if scheme.is_some() {
        for a in 0..2 {
            let sp = &spaces.shear[a];
            conn_s[a] = sp.eval(mid.0, mid.1, 0)?.indices(sp.m()).collect();
        }
    }
    let ks = [conn_s[0].len(), conn_s[1].len()];
    let dm = mat.d_m();
    let kgt = mat.shear_stiffness();

    let mut k_dd = DMatrix::zeros(nd, nd);
    let mut k_ds = [DMatrix::zeros(nd, ks[0]), DMatrix::zeros(nd, ks[1])];
    let mut k_sd = [DMatrix::zeros(ks[0], nd), DMatrix::zeros(ks[1], nd)];
    let mut k_ss = [DMatrix::zeros(ks[0], ks[0]), DMatrix::zeros(ks[1], ks[1])];
    let mut f_w = DVector::zeros(k);

    let mut bend = DMatrix::zeros(3, nd);
    let mut shear_rows = DMatrix::zeros(2, nd);
    for qp in element_points(elem, assembly_points(spaces)) {
        let ev = geo.eval(qp.xi, qp.eta)?;
        if !(ev.det > 0.0) {
            return Err(PlateError::DegenerateJacobian {
                patch: patch_index,
                xi: qp.xi,
                eta: qp.eta,
                det: ev.det,
            });
        }
        let (dx, dy) = ev.physical_gradients();
        let r = &ev.basis.values;
        let w_disp = qp.weight * ev.det;

        bend.fill(0.0);
        shear_rows.fill(0.0);
        for a in 0..k {
            bend[(0, k + a)] = dx[a];
            bend[(1, 2 * k + a)] = dy[a];
            bend[(2, k + a)] = dy[a];
            bend[(2, 2 * k + a)] = dx[a];
            shear_rows[(0, a)] = dx[a];
            shear_rows[(0, k + a)] = -r[a];
            shear_rows[(1, a)] = dy[a];
            shear_rows[(1, 2 * k + a)] = -r[a];
        }
        let db = dm * &bend;
        k_dd += bend.transpose() * db * w_disp;

        let f = load(ev.point[0], ev.point[1]);
        for a in 0..k {
            f_w[a] += r[a] * f * w_disp;
        }

        let Some(scheme) = scheme else {
            k_dd += shear_rows.transpose() * &shear_rows * (kgt * w_disp);
            continue;
        };
        for al in 0..2 {
            let sp = &spaces.shear[al];
            let bu = eval_basis_1d(&sp.knots_u, qp.xi, 0)?;
            let bv = eval_basis_1d(&sp.knots_v, qp.eta, 0)?;
            let se = sp.combine(&bu, &bv, false);
            let w_shear = match scheme {
                Scheme::Galerkin => w_disp,
                Scheme::Weighted => qp.weight * se.weight * se.weight,
            };
            let rs = &se.values;
            for b in 0..ks[al] {
                for c in 0..nd {
                    let g = shear_rows[(al, c)];
                    if g != 0.0 {
                        k_ds[al][(c, b)] += g * rs[b] * w_disp;
                        k_sd[al][(b, c)] -= kgt * rs[b] * g * w_shear;
                    }
                }
                for c in 0..ks[al] {
                    k_ss[al][(b, c)] += rs[b] * rs[c] * w_shear;
                }
            }
        }
    }
    Ok(ElementMatrices {
        conn_d,
        conn_s,
        k_dd,
        k_ds,
        k_sd,
        k_ss,
        f_w,
    })
}

/// Global block system. Displacement DOFs are ordered all `w`, then
/// `(Θ₁, Θ₂)` per control point; each shear field is numbered separately,
/// patch after patch.
#[derive(Debug, Clone)]
pub struct MixedSystem {
    pub k_dd: SparseMatrix,
    pub k_ds: [SparseMatrix; 2],
    pub k_sd: [SparseMatrix; 2],
    pub k_ss: [SparseMatrix; 2],
    pub f_d: Vec<f64>,
    pub scheme: Scheme,
    /// Whether the shear rows already carry a dual transform.
    pub transformed: bool,
}

impl MixedSystem {
    pub fn n_disp(&self) -> usize {
        self.k_dd.nrows()
    }

    pub fn n_shear(&self, alpha: usize) -> usize {
        self.k_ss[alpha].nrows()
    }

    /// Total number of unknowns.
    pub fn dim(&self) -> usize {
        self.n_disp() + self.n_shear(0) + self.n_shear(1)
    }

    /// The full saddle-point matrix `[[K_dd, K_dS], [K_Sd, K_SS]]` and its
    /// right-hand side.
    pub fn monolithic(&self) -> (SparseMatrix, Vec<f64>) {
        let nd = self.n_disp();
        let (n1, n2) = (self.n_shear(0), self.n_shear(1));
        let n = nd + n1 + n2;
        let mut t = TripletBuilder::new(n, n);
        t.add_block(0, 0, &self.k_dd);
        t.add_block(0, nd, &self.k_ds[0]);
        t.add_block(0, nd + n1, &self.k_ds[1]);
        t.add_block(nd, 0, &self.k_sd[0]);
        t.add_block(nd + n1, 0, &self.k_sd[1]);
        t.add_block(nd, nd, &self.k_ss[0]);
        t.add_block(nd + n1, nd + n1, &self.k_ss[1]);
        let mut f = self.f_d.clone();
        f.resize(n, 0.0);
        (t.build(), f)
    }
}

/// Dual transforms `[T₁, T₂]` of one patch.
pub type PatchTransforms = [DualTransform2D; 2];

/// Global displacement DOF of a patch-local basis function.
fn global_d(asm: &PatchAssembly, patch: usize, local_cp: usize, field: usize) -> usize {
    let cp = asm.cp_map[patch][local_cp];
    match field {
        0 => cp,
        f => asm.n_cp + 2 * cp + (f - 1),
    }
}

fn element_d_dofs(asm: &PatchAssembly, patch: usize, conn: &[usize]) -> Vec<usize> {
    let mut out = Vec::with_capacity(3 * conn.len());
    for field in 0..3 {
        out.extend(conn.iter().map(|&a| global_d(asm, patch, a, field)));
    }
    out
}

fn all_elements(asm: &PatchAssembly) -> Vec<(usize, ((f64, f64), (f64, f64)))> {
    asm.spaces
        .iter()
        .enumerate()
        .flat_map(|(p, s)| s.elements().into_iter().map(move |e| (p, e)))
        .collect()
}

type Trips = Vec<(usize, usize, f64)>;

#[derive(Default)]
struct ElementTriplets {
    dd: Trips,
    ds: [Trips; 2],
    sd: [Trips; 2],
    ss: [Trips; 2],
    f: Vec<(usize, f64)>,
}

fn push_dense(out: &mut Trips, rows: &[usize], cols: &[usize], m: &DMatrix<f64>) {
    for (a, &i) in rows.iter().enumerate() {
        for (b, &j) in cols.iter().enumerate() {
            let v = m[(a, b)];
            if v != 0.0 {
                out.push((i, j, v));
            }
        }
    }
}

/// Assembles the mixed system over all patches.
///
/// With `transforms`, the shear rows are replaced element by element by
/// `T^e K^e`, which equals the global product `T K`.
pub fn assemble<F>(
    asm: &PatchAssembly,
    mat: &PlateMaterial,
    scheme: Scheme,
    load: &F,
    transforms: Option<&[PatchTransforms]>,
) -> Result<MixedSystem, PlateError>
where
    F: Fn(f64, f64) -> f64 + Sync + ?Sized,
{
    let elements = all_elements(asm);
    let parts: Vec<Result<ElementTriplets, PlateError>> = elements
        .par_iter()
        .map(|&(p, elem)| {
            let sp = &asm.spaces[p];
            let em = element_matrices_impl(elem, sp, mat, Some(scheme), load, p)?;
            let dofs = element_d_dofs(asm, p, &em.conn_d);
            let mut out = ElementTriplets::default();
            push_dense(&mut out.dd, &dofs, &dofs, &em.k_dd);
            for (a, &cp) in em.conn_d.iter().enumerate() {
                out.f.push((global_d(asm, p, cp, 0), em.f_w[a]));
            }
            for al in 0..2 {
                let off = asm.shear_offsets[al][p];
                let scols: Vec<usize> = em.conn_s[al].iter().map(|&s| off + s).collect();
                push_dense(&mut out.ds[al], &dofs, &scols, &em.k_ds[al]);
                match transforms {
                    None => {
                        push_dense(&mut out.sd[al], &scols, &dofs, &em.k_sd[al]);
                        push_dense(&mut out.ss[al], &scols, &scols, &em.k_ss[al]);
                    }
                    Some(ts) => {
                        let te = extract_element_transform(&ts[p][al], &em.conn_s[al]);
                        let rows: Vec<usize> = te.rows.iter().map(|&s| off + s).collect();
                        push_dense(&mut out.sd[al], &rows, &dofs, &(&te.block * &em.k_sd[al]));
                        push_dense(&mut out.ss[al], &rows, &scols, &(&te.block * &em.k_ss[al]));
                    }
                }
            }
            Ok(out)
        })
        .collect();

    let nd = 3 * asm.n_cp;
    let ns = asm.n_shear;
    let mut dd = TripletBuilder::new(nd, nd);
    let mut ds = [TripletBuilder::new(nd, ns[0]), TripletBuilder::new(nd, ns[1])];
    let mut sd = [TripletBuilder::new(ns[0], nd), TripletBuilder::new(ns[1], nd)];
    let mut ss = [TripletBuilder::new(ns[0], ns[0]), TripletBuilder::new(ns[1], ns[1])];
    let mut f_d = vec![0.0; nd];
    for part in parts {
        let part = part?;
        dd.extend(part.dd);
        for (al, ((ds_p, sd_p), ss_p)) in part.ds.into_iter().zip(part.sd).zip(part.ss).enumerate() {
            ds[al].extend(ds_p);
            sd[al].extend(sd_p);
            ss[al].extend(ss_p);
        }
        for (i, v) in part.f {
            f_d[i] += v;
        }
    }
    let [ds0, ds1] = ds;
    let [sd0, sd1] = sd;
    let [ss0, ss1] = ss;
    Ok(MixedSystem {
        k_dd: dd.build(),
        k_ds: [ds0.build(), ds1.build()],
        k_sd: [sd0.build(), sd1.build()],
        k_ss: [ss0.build(), ss1.build()],
        f_d,
        scheme,
        transformed: transforms.is_some(),
    })
}

/// Assembles the primal displacement formulation.
pub fn assemble_primal<F>(
    asm: &PatchAssembly,
    mat: &PlateMaterial,
    load: &F,
) -> Result<(SparseMatrix, Vec<f64>), PlateError>
where
    F: Fn(f64, f64) -> f64 + Sync + ?Sized,
{
    let elements = all_elements(asm);
    let parts: Vec<Result<(Trips, Vec<(usize, f64)>), PlateError>> = elements
        .par_iter()
        .map(|&(p, elem)| {
            let em = element_matrices_impl(elem, &asm.spaces[p], mat, None, load, p)?;
            let dofs = element_d_dofs(asm, p, &em.conn_d);
            let mut t = Vec::new();
            push_dense(&mut t, &dofs, &dofs, &em.k_dd);
            let f = em
                .conn_d
                .iter()
                .enumerate()
                .map(|(a, &cp)| (global_d(asm, p, cp, 0), em.f_w[a]))
                .collect();
            Ok((t, f))
        })
        .collect();
    let nd = 3 * asm.n_cp;
    let mut k = TripletBuilder::new(nd, nd);
    let mut f_d = vec![0.0; nd];
    for part in parts {
        let (t, f) = part?;
        k.extend(t);
        for (i, v) in f {
            f_d[i] += v;
        }
    }
    Ok((k.build(), f_d))
}

/// Which displacement DOFs survive the clamped boundary conditions.
#[derive(Debug, Clone, PartialEq)]
pub struct ConstraintReport {
    /// Free displacement DOFs, increasing.
    pub free: Vec<usize>,
    /// Number of eliminated displacement DOFs.
    pub fixed: usize,
}

impl ConstraintReport {
    /// Scatters a solution on the free DOFs into a full displacement vector
    /// with zeros on the clamped ones.
    pub fn expand(&self, n_disp: usize, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; n_disp];
        for (&i, &v) in self.free.iter().zip(x) {
            out[i] = v;
        }
        out
    }
}

/// Free displacement DOFs: `w` and `Θ` on boundary control points are
/// clamped; shear DOFs are never constrained.
pub fn clamped_dofs(asm: &PatchAssembly) -> ConstraintReport {
    let mut free = Vec::new();
    let n = asm.n_cp;
    for field in 0..3 {
        for cp in 0..n {
            if !asm.boundary[cp] {
                free.push(match field {
                    0 => cp,
                    f => n + 2 * cp + f - 1,
                });
            }
        }
    }
    free.sort_unstable();
    ConstraintReport {
        fixed: 3 * n - free.len(),
        free,
    }
}

/// Eliminates the clamped displacement rows and columns.
pub fn apply_clamped_bc(system: &MixedSystem, asm: &PatchAssembly) -> (MixedSystem, ConstraintReport) {
    let report = clamped_dofs(asm);
    let free = &report.free;
    let all = |n: usize| (0..n).collect::<Vec<_>>();
    let s: [Vec<usize>; 2] = [all(system.n_shear(0)), all(system.n_shear(1))];
    let reduced = MixedSystem {
        k_dd: system.k_dd.select(free, free),
        k_ds: [system.k_ds[0].select(free, &s[0]), system.k_ds[1].select(free, &s[1])],
        k_sd: [system.k_sd[0].select(&s[0], free), system.k_sd[1].select(&s[1], free)],
        k_ss: system.k_ss.clone(),
        f_d: free.iter().map(|&i| system.f_d[i]).collect(),
        scheme: system.scheme,
        transformed: system.transformed,
    };
    (reduced, report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dual::gram_matrix;
    use crate::multipatch::build_dof_map;
    use crate::spline::{ControlNet, KnotVector};
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn patch(ku: &[f64], kv: &[f64], p: usize, rows: &[[f64; 3]]) -> SurfacePatch {
        // rows are given η outer as (x, y, w)
        let ku = KnotVector::new(ku.to_vec(), p).unwrap();
        let kv = KnotVector::new(kv.to_vec(), p).unwrap();
        let (n, m) = (ku.num_basis(), kv.num_basis());
        let mut pts = vec![[0.0; 3]; n * m];
        let mut w = vec![0.0; n * m];
        for j in 0..m {
            for i in 0..n {
                let r = rows[j * n + i];
                pts[i * m + j] = [r[0], r[1], 0.0];
                w[i * m + j] = r[2];
            }
        }
        SurfacePatch::new(ku, kv, ControlNet::new(n, m, pts, w).unwrap()).unwrap()
    }

    fn unit_square() -> SurfacePatch {
        let k = [0.0, 0.0, 1.0, 1.0];
        patch(&k, &k, 1, &[[0.0, 0.0, 1.0], [1.0, 0.0, 1.0], [0.0, 1.0, 1.0], [1.0, 1.0, 1.0]])
    }

    fn nurbs_square() -> SurfacePatch {
        let k = [0.0, 0.0, 0.0, 1.0, 1.0, 1.0];
        patch(
            &k,
            &k,
            2,
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
        )
    }

    fn c1_patch() -> SurfacePatch {
        let k = [0.0, 0.0, 0.0, 0.5, 1.0, 1.0, 1.0];
        let rows = [
            [0.0, 0.0, 1.0], [0.25, 0.0, 1.0], [0.75, 0.0, 1.0], [1.0, 0.0, 1.0],
            [0.0, 0.25, 1.0], [0.45, 0.4, 1.0], [0.7, 0.2, 1.0], [1.0, 0.25, 1.0],
            [0.0, 0.75, 1.0], [0.2, 0.9, 1.0], [0.5, 0.6, 1.0], [1.0, 0.75, 1.0],
            [0.0, 1.0, 1.0], [0.25, 1.0, 1.0], [0.75, 1.0, 1.0], [1.0, 1.0, 1.0],
        ];
        patch(&k, &k, 2, &rows)
    }

    fn mat(t: f64) -> PlateMaterial {
        material(10000.0, 0.3, t, 5.0 / 6.0).unwrap()
    }

    fn asm_for(p: &SurfacePatch, deg: usize, level: u32, w: ShearWeights) -> PatchAssembly {
        build_dof_map(vec![build_field_spaces(p, deg, level, None, w).unwrap()]).unwrap()
    }

    #[test]
    fn material_constants() {
        let m = mat(0.1);
        assert_relative_eq!(m.d_m()[(0, 0)], 0.915_750_915_750_915_8, max_relative = 1e-12);
        assert_relative_eq!(m.shear_stiffness(), 320.512_820_512_820_5, max_relative = 1e-12);
        assert_relative_eq!(m.d_s()[(1, 1)], m.shear_stiffness());
        assert_eq!(material(1.0, 0.0, 1.0, 1.0).unwrap().d_m()[(0, 1)], 0.0);
        let thick = mat(0.2);
        assert_relative_eq!(thick.d_m()[(0, 0)], 8.0 * m.d_m()[(0, 0)], max_relative = 1e-12);
        assert_relative_eq!(thick.shear_stiffness(), 2.0 * m.shear_stiffness(), max_relative = 1e-12);
        for (e, nu, t) in [(0.0, 0.3, 0.1), (1.0, 0.5, 0.1), (1.0, -1.0, 0.1), (1.0, 0.3, 0.0)] {
            assert!(matches!(material(e, nu, t, 5.0 / 6.0), Err(PlateError::InvalidMaterial(_))));
        }
    }

    #[test]
    fn field_space_sizes() {
        let s = build_field_spaces(&unit_square(), 2, 0, None, ShearWeights::Nurbs).unwrap();
        assert_eq!((s.geometry.n(), s.geometry.m()), (3, 3));
        assert_eq!((s.shear[0].n(), s.shear[0].m()), (2, 3));
        assert_eq!((s.shear[1].n(), s.shear[1].m()), (3, 2));
        assert!(matches!(
            build_field_spaces(&unit_square(), 1, 0, None, ShearWeights::Nurbs),
            Err(PlateError::DegreeTooLow(1))
        ));
        let same = build_field_spaces(&unit_square(), 2, 2, Some(ContinuityMode::AllKnots), ShearWeights::Nurbs).unwrap();
        assert_eq!(same, build_field_spaces(&unit_square(), 2, 2, None, ShearWeights::Nurbs).unwrap());
    }

    #[test]
    fn continuity_reduction_precedes_refinement() {
        let s = build_field_spaces(&c1_patch(), 2, 1, Some(ContinuityMode::AllKnots), ShearWeights::Nurbs).unwrap();
        assert_eq!(s.geometry.knots_u().multiplicity(0.5), 2);
        assert_eq!(s.geometry.knots_v().multiplicity(0.5), 2);
        assert_eq!(s.geometry.knots_u().multiplicity(0.25), 1);
        assert_eq!(s.elements_per_dir(), (4, 4));
    }

    #[test]
    fn rigid_body_modes_have_no_energy() {
        let s = build_field_spaces(&c1_patch(), 3, 0, None, ShearWeights::Nurbs).unwrap();
        let m = mat(0.1);
        for elem in s.elements() {
            let em = primal_element_matrices(elem, &s, &m, &|_, _| 0.0).unwrap();
            let k = em.conn_d.len();
            let net = s.geometry.net();
            let (a, b, c) = (0.3, -1.2, 0.7);
            let mut d = DVector::zeros(3 * k);
            for (l, &cp) in em.conn_d.iter().enumerate() {
                let x = net.points[cp];
                d[l] = a + b * x[0] + c * x[1];
                d[k + l] = b;
                d[2 * k + l] = c;
            }
            let r = &em.k_dd * &d;
            assert!(r.amax() <= 1e-10 * em.k_dd.amax(), "{}", r.amax());
        }
    }

    #[test]
    fn weighted_shear_block_is_bspline_gram() {
        let s = build_field_spaces(&unit_square(), 2, 0, None, ShearWeights::Nurbs).unwrap();
        let elem = s.elements()[0];
        let em = element_matrices(elem, &s, &mat(0.1), Scheme::Weighted, &|_, _| 1.0).unwrap();
        for a in 0..2 {
            let sp = &s.shear[a];
            let g = gram_matrix(&sp.knots_u).kronecker(&gram_matrix(&sp.knots_v));
            assert!((&em.k_ss[a] - g).amax() < 1e-12);
        }
    }

    #[test]
    fn one_element_dimensions_and_clamping() {
        let asm = asm_for(&unit_square(), 2, 0, ShearWeights::Nurbs);
        let sys = assemble(&asm, &mat(0.1), Scheme::Galerkin, &|_, _| 0.0, None).unwrap();
        assert_eq!(sys.dim(), 39);
        assert!(sys.f_d.iter().all(|v| *v == 0.0));
        // only the center function vanishes on the boundary
        let (red, report) = apply_clamped_bc(&sys, &asm);
        assert_eq!(red.n_disp(), 3);
        assert_eq!(report.fixed, 24);
        assert_eq!(red.dim(), 15);
    }

    #[test]
    fn interior_point_count() {
        let asm = asm_for(&unit_square(), 2, 2, ShearWeights::Nurbs);
        let report = clamped_dofs(&asm);
        assert_eq!(report.free.iter().filter(|&&i| i < asm.n_cp).count(), 16);
        let sys = assemble(&asm, &mat(0.1), Scheme::Weighted, &|_, _| 1.0, None).unwrap();
        let (red, _) = apply_clamped_bc(&sys, &asm);
        assert!(red.k_dd.is_symmetric(1e-12));
    }

    #[test]
    fn assembled_blocks_are_symmetric_where_expected() {
        let asm = asm_for(&nurbs_square(), 3, 1, ShearWeights::Nurbs);
        for scheme in [Scheme::Galerkin, Scheme::Weighted] {
            let sys = assemble(&asm, &mat(0.1), scheme, &|x, y| x + y, None).unwrap();
            assert!(sys.k_dd.is_symmetric(1e-12));
            for a in 0..2 {
                assert!(sys.k_ss[a].is_symmetric(1e-12));
                let c = nalgebra::linalg::Cholesky::new(sys.k_ss[a].to_dense());
                assert!(c.is_some(), "K_SS not positive definite");
            }
        }
        // Galerkin form: K_Sd = −κGt K_dSᵀ
        let sys = assemble(&asm, &mat(0.1), Scheme::Galerkin, &|_, _| 1.0, None).unwrap();
        let kgt = mat(0.1).shear_stiffness();
        for a in 0..2 {
            let diff = sys.k_sd[a].add_scaled(1.0, &sys.k_ds[a].transpose(), kgt);
            assert!(diff.max_abs() < 1e-12 * sys.k_sd[a].max_abs());
        }
    }

    #[test]
    fn element_wise_transform_equals_global_product() {
        use crate::dual::{dual_transform_1d, dual_transform_2d, DualVariant};
        let asm = asm_for(&nurbs_square(), 2, 1, ShearWeights::Nurbs);
        let sp = &asm.spaces[0];
        let tr: Vec<PatchTransforms> = vec![[0, 1].map(|a| {
            let s = &sp.shear[a];
            let su = dual_transform_1d(&s.knots_u, s.knots_u.degree(), DualVariant::Ad).unwrap();
            let sv = dual_transform_1d(&s.knots_v, s.knots_v.degree(), DualVariant::Ad).unwrap();
            dual_transform_2d(&su, &sv, s.weights.as_deref()).unwrap()
        })];
        let f = |x: f64, y: f64| 1.0 + x * y;
        let raw = assemble(&asm, &mat(0.1), Scheme::Weighted, &f, None).unwrap();
        let ew = assemble(&asm, &mat(0.1), Scheme::Weighted, &f, Some(&tr)).unwrap();
        for a in 0..2 {
            let g_sd = tr[0][a].matrix.matmul(&raw.k_sd[a]);
            let g_ss = tr[0][a].matrix.matmul(&raw.k_ss[a]);
            assert!(g_sd.add_scaled(1.0, &ew.k_sd[a], -1.0).max_abs() <= 1e-12 * g_sd.max_abs());
            assert!(g_ss.add_scaled(1.0, &ew.k_ss[a], -1.0).max_abs() <= 1e-12 * g_ss.max_abs());
        }
    }

    #[test]
    fn galerkin_and_weighted_agree_on_coarse_mesh() {
        let asm = asm_for(&unit_square(), 2, 2, ShearWeights::Nurbs);
        let center = |scheme| {
            let sys = assemble(&asm, &mat(0.01), scheme, &|_, _| 1.0, None).unwrap();
            let (red, report) = apply_clamped_bc(&sys, &asm);
            let (k, f) = red.monolithic();
            let x = crate::linalg::solve_direct(&k, &f).unwrap();
            let d = report.expand(red_dim(&asm), &x[..report.free.len()]);
            let ev = asm.spaces[0].geometry.eval(0.5, 0.5).unwrap();
            ev.basis
                .indices(asm.spaces[0].geometry.m())
                .zip(&ev.basis.values)
                .map(|(k, r)| r * d[k])
                .sum::<f64>()
        };
        let (g, w) = (center(Scheme::Galerkin), center(Scheme::Weighted));
        assert!(((g - w) / g).abs() < 0.01, "{g} vs {w}");
    }

    fn red_dim(asm: &PatchAssembly) -> usize {
        asm.n_disp()
    }

    #[test]
    fn degenerate_jacobian_is_reported() {
        // collapsed patch: all points on one line
        let k = [0.0, 0.0, 1.0, 1.0];
        let p = patch(&k, &k, 1, &[[0.0, 0.0, 1.0], [1.0, 0.0, 1.0], [0.0, 0.0, 1.0], [1.0, 0.0, 1.0]]);
        let asm = asm_for(&p, 2, 0, ShearWeights::Nurbs);
        assert!(matches!(
            assemble(&asm, &mat(0.1), Scheme::Galerkin, &|_, _| 1.0, None),
            Err(PlateError::DegenerateJacobian { .. })
        ));
    }

    #[test]
    fn assembly_is_deterministic() {
        let asm = asm_for(&nurbs_square(), 2, 2, ShearWeights::Nurbs);
        let a = assemble(&asm, &mat(0.1), Scheme::Weighted, &|x, _| x, None).unwrap();
        let b = assemble(&asm, &mat(0.1), Scheme::Weighted, &|x, _| x, None).unwrap();
        assert_eq!(a.k_dd, b.k_dd);
        assert_eq!(a.k_sd, b.k_sd);
        assert_eq!(a.f_d, b.f_d);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]

        #[test]
        fn load_vector_integrates_load(c in -5.0f64..5.0, deg in 2usize..4, level in 0u32..3) {
            // Σ f_w = ∫ c dA = c · area; exact for the polynomial geometry
            let asm = asm_for(&c1_patch(), deg, level, ShearWeights::Nurbs);
            let sys = assemble(&asm, &mat(0.1), Scheme::Weighted, &|_, _| c, None).unwrap();
            let total: f64 = sys.f_d[..asm.n_cp].iter().sum();
            let area = {
                let g = GaussLegendre::new(deg + 3);
                let mut a = 0.0;
                for ((u0, u1), (v0, v1)) in asm.spaces[0].elements() {
                    for (x, wx) in g.mapped(u0, u1) {
                        for (y, wy) in g.mapped(v0, v1) {
                            a += wx * wy * asm.spaces[0].geometry.eval(x, y).unwrap().det;
                        }
                    }
                }
                a
            };
            prop_assert!((total - c * area).abs() <= 1e-12 * (1.0 + (c * area).abs()));
            prop_assert!(sys.f_d[asm.n_cp..].iter().all(|v| *v == 0.0));
        }
    }
}
