//! Static condensation of the shear unknowns and the five solver variants.
//!
//! With the sign convention of [`crate::plate`], the shear rows read
//! `K_Sd d + K_SS S = 0`. Replacing `K_SS` by an easily inverted matrix `L`
//! gives `S = −L⁻¹ K_Sd d` and the condensed displacement system
//!
//! ```text
//! (K_dd − Σ_α K_dSα L_α⁻¹ K_Sαd) d = f
//! ```
//!
//! After a dual Petrov-Galerkin transform the transformed `T K_SS` has unit
//! row sums, so `L = I` and no inverse is needed at all.

use std::ops::Range;
use std::time::Instant;

use thiserror::Error;

use crate::dual::{dual_transform_1d, dual_transform_2d, ContinuityMode, DualError, DualVariant};
use crate::linalg::{nnz_and_bandwidth, solve_timed, SolveError, SparseLu, SparseMatrix, TripletBuilder};
use crate::multipatch::{build_dof_map, MultipatchError, PatchAssembly};
use crate::plate::{
    apply_clamped_bc, assemble, assemble_primal, build_field_spaces, clamped_dofs, MixedSystem,
    PatchTransforms, PlateError, PlateMaterial, Scheme, ShearWeights,
};
use crate::spline::{SplineError, SurfacePatch};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CondensationError {
    #[error("row-sum lumped shear block has non-positive entry {value:e} in row {row}")]
    NonPositiveDiagonal { row: usize, value: f64 },
    #[error("shear block is singular")]
    SingularShearBlock,
    #[error("transform of size {found} does not match shear space of size {expected}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error(transparent)]
    Plate(#[from] PlateError),
    #[error(transparent)]
    Multipatch(#[from] MultipatchError),
    #[error(transparent)]
    Dual(#[from] DualError),
    #[error(transparent)]
    Solve(#[from] SolveError),
}

impl From<SplineError> for CondensationError {
    fn from(e: SplineError) -> Self {
        Self::Plate(e.into())
    }
}

impl CondensationError {
    /// Short name of the failure, used in study output.
    pub fn tag(&self) -> &'static str {
        match self {
            Self::NonPositiveDiagonal { .. } => "NonPositiveDiagonal",
            Self::SingularShearBlock => "SingularShearBlock",
            Self::DimensionMismatch { .. } => "DimensionMismatch",
            Self::Plate(PlateError::InvalidMaterial(_)) => "InvalidMaterial",
            Self::Plate(PlateError::DegreeTooLow(_)) => "DegreeTooLow",
            Self::Plate(PlateError::DegenerateJacobian { .. }) => "DegenerateJacobian",
            Self::Plate(PlateError::Spline(_)) => "Spline",
            Self::Multipatch(MultipatchError::NonConformingInterface { .. }) => "NonConformingInterface",
            Self::Multipatch(MultipatchError::NoPatches) => "NoPatches",
            Self::Dual(DualError::ReproductionFailure { .. }) => "ReproductionFailure",
            Self::Dual(_) => "Dual",
            Self::Solve(SolveError::SingularMatrix) => "SingularMatrix",
            Self::Solve(SolveError::ResidualTooLarge { .. }) => "ResidualTooLarge",
            Self::Solve(_) => "Solve",
        }
    }
}

/// Formulations compared by the benchmark.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum SolverVariant {
    /// Primal displacement formulation.
    Std,
    /// Mixed formulation, saddle-point solve.
    Mxd,
    /// Mixed, NURBS test functions, row-sum lumping.
    Lmp,
    /// Mixed, approximate dual test functions.
    Ad,
    /// Mixed, enhanced approximate dual test functions.
    Ead,
}

impl SolverVariant {
    pub const ALL: [SolverVariant; 5] = [Self::Std, Self::Mxd, Self::Lmp, Self::Ad, Self::Ead];

    pub fn name(self) -> &'static str {
        match self {
            Self::Std => "std",
            Self::Mxd => "mxd",
            Self::Lmp => "lmp",
            Self::Ad => "ad",
            Self::Ead => "ead",
        }
    }

    /// Knot preprocessing applied when continuity reduction is enabled.
    pub fn continuity_mode(self) -> ContinuityMode {
        match self {
            Self::Ead => ContinuityMode::PreserveC0,
            _ => ContinuityMode::AllKnots,
        }
    }
}

impl std::str::FromStr for SolverVariant {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|v| v.name() == s.trim())
            .ok_or_else(|| format!("unknown variant '{s}' (expected std, mxd, lmp, ad or ead)"))
    }
}

impl std::fmt::Display for SolverVariant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// How the dual transform is applied to multi-patch systems.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TransformPath {
    /// Global product for one patch, element-wise otherwise.
    Auto,
    Global,
    ElementWise,
}

/// Replacement of the shear-shear block before elimination.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Lumping {
    /// Solve with the full block.
    Exact,
    /// Diagonal of row sums.
    RowSum,
    /// Identity; valid for dual-transformed blocks.
    Identity,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveConfig {
    pub variant: SolverVariant,
    pub degree: usize,
    pub level: u32,
    pub continuity_reduction: bool,
    pub shear_weights: ShearWeights,
    pub transform_path: TransformPath,
}

impl SolveConfig {
    pub fn new(variant: SolverVariant, degree: usize, level: u32) -> Self {
        Self {
            variant,
            degree,
            level,
            continuity_reduction: true,
            shear_weights: ShearWeights::Nurbs,
            transform_path: TransformPath::Auto,
        }
    }
}

/// Refines every coarse patch and numbers the DOFs.
pub fn prepare_assembly(patches: &[SurfacePatch], config: &SolveConfig) -> Result<PatchAssembly, CondensationError> {
    let mode = config.continuity_reduction.then(|| config.variant.continuity_mode());
    let spaces = patches
        .iter()
        .map(|p| build_field_spaces(p, config.degree, config.level, mode, config.shear_weights))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(build_dof_map(spaces)?)
}

/// Dual transforms of both shear spaces of every patch, with full
/// reproduction in each direction.
pub fn build_transforms(asm: &PatchAssembly, variant: DualVariant) -> Result<Vec<PatchTransforms>, CondensationError> {
    asm.spaces
        .iter()
        .map(|sp| {
            let mk = |a: usize| -> Result<_, CondensationError> {
                let s = &sp.shear[a];
                let su = dual_transform_1d(&s.knots_u, s.knots_u.degree(), variant)?;
                let sv = dual_transform_1d(&s.knots_v, s.knots_v.degree(), variant)?;
                Ok(dual_transform_2d(&su, &sv, s.weights.as_deref())?)
            };
            Ok([mk(0)?, mk(1)?])
        })
        .collect()
}

/// Block-diagonal global transform of one shear field.
fn global_transform(asm: &PatchAssembly, transforms: &[PatchTransforms], alpha: usize) -> Result<SparseMatrix, CondensationError> {
    let n = asm.n_shear[alpha];
    let mut t = TripletBuilder::new(n, n);
    for (p, tr) in transforms.iter().enumerate() {
        let expected = asm.spaces[p].n_shear(alpha);
        if tr[alpha].dim() != expected {
            return Err(CondensationError::DimensionMismatch {
                expected,
                found: tr[alpha].dim(),
            });
        }
        t.add_block(asm.shear_offsets[alpha][p], asm.shear_offsets[alpha][p], &tr[alpha].matrix);
    }
    Ok(t.build())
}

/// Replaces the shear rows by `T K_Sd` and `T K_SS` using the global
/// (block-diagonal) product.
pub fn pg_transform(
    system: &MixedSystem,
    asm: &PatchAssembly,
    transforms: &[PatchTransforms],
) -> Result<MixedSystem, CondensationError> {
    if transforms.len() != asm.n_patches() {
        return Err(CondensationError::DimensionMismatch {
            expected: asm.n_patches(),
            found: transforms.len(),
        });
    }
    let t = [global_transform(asm, transforms, 0)?, global_transform(asm, transforms, 1)?];
    for a in 0..2 {
        if system.n_shear(a) != t[a].nrows() {
            return Err(CondensationError::DimensionMismatch {
                expected: system.n_shear(a),
                found: t[a].nrows(),
            });
        }
    }
    let mut out = system.clone();
    for a in 0..2 {
        out.k_sd[a] = t[a].matmul(&system.k_sd[a]);
        out.k_ss[a] = t[a].matmul(&system.k_ss[a]);
    }
    out.transformed = true;
    Ok(out)
}

/// Row sums of a block as a diagonal; non-positive entries are an error.
pub fn row_sum_lump(block: &SparseMatrix) -> Result<Vec<f64>, CondensationError> {
    let d = block.row_sums();
    if let Some((row, &value)) = d.iter().enumerate().find(|(_, v)| !(**v > 0.0)) {
        return Err(CondensationError::NonPositiveDiagonal { row, value });
    }
    Ok(d)
}

/// Largest `|row sum − 1|` of a block.
pub fn lumping_deviation(block: &SparseMatrix) -> f64 {
    block.row_sums().iter().fold(0.0, |m, s| m.max((s - 1.0).abs()))
}

/// Displacement-only system after eliminating the shear unknowns.
#[derive(Debug, Clone)]
pub struct CondensedSystem {
    pub k: SparseMatrix,
    pub f: Vec<f64>,
    /// `S_α = recovery[α] · d`.
    pub recovery: [SparseMatrix; 2],
    /// Row-sum deviation of the replaced block for identity lumping.
    pub lump_dev: Option<f64>,
}

/// Eliminates the shear unknowns over the whole system.
pub fn condense(system: &MixedSystem, lumping: Lumping) -> Result<CondensedSystem, CondensationError> {
    let ranges = [vec![0..system.n_shear(0)], vec![0..system.n_shear(1)]];
    condense_blocks(system, lumping, &ranges)
}

/// Eliminates the shear unknowns patch by patch and sums the contributions
/// in patch order.
pub fn condense_patchwise(
    system: &MixedSystem,
    asm: &PatchAssembly,
    lumping: Lumping,
) -> Result<CondensedSystem, CondensationError> {
    let ranges = [0, 1].map(|a| (0..asm.n_patches()).map(|p| asm.shear_range(a, p)).collect::<Vec<_>>());
    condense_blocks(system, lumping, &ranges)
}

fn condense_blocks(
    system: &MixedSystem,
    lumping: Lumping,
    ranges: &[Vec<Range<usize>>; 2],
) -> Result<CondensedSystem, CondensationError> {
    let nd = system.n_disp();
    let all_d: Vec<usize> = (0..nd).collect();
    let mut k = system.k_dd.clone();
    let mut recovery = Vec::with_capacity(2);
    let mut lump_dev: Option<f64> = None;
    for a in 0..2 {
        let mut rec = TripletBuilder::new(system.n_shear(a), nd);
        for range in &ranges[a] {
            let idx: Vec<usize> = range.clone().collect();
            let k_sd = system.k_sd[a].select(&idx, &all_d);
            let k_ss = system.k_ss[a].select(&idx, &idx);
            let r = match lumping {
                Lumping::Identity => {
                    let dev = lumping_deviation(&k_ss);
                    lump_dev = Some(lump_dev.map_or(dev, |d| d.max(dev)));
                    k_sd.scale(-1.0)
                }
                Lumping::RowSum => {
                    let d = row_sum_lump(&k_ss)?;
                    let inv: Vec<f64> = d.iter().map(|x| -1.0 / x).collect();
                    k_sd.scale_rows(&inv)
                }
                Lumping::Exact => {
                    let lu = SparseLu::factor(&k_ss).map_err(|_| CondensationError::SingularShearBlock)?;
                    let x = lu.solve_columns(&k_sd)?;
                    SparseMatrix::from_dense(&(-x), 0.0)
                }
            };
            let k_ds = system.k_ds[a].select(&all_d, &idx);
            k = k.add_scaled(1.0, &k_ds.matmul(&r), 1.0);
            for (i, j, v) in r.iter() {
                rec.push(range.start + i, j, v);
            }
        }
        recovery.push(rec.build());
    }
    let [r0, r1]: [SparseMatrix; 2] = recovery.try_into().expect("two shear fields");
    Ok(CondensedSystem {
        k: k.pruned(crate::linalg::PRUNE_TOL),
        f: system.f_d.clone(),
        recovery: [r0, r1],
        lump_dev,
    })
}

/// Shear coefficients belonging to a displacement solution.
pub fn recover_shear(cond: &CondensedSystem, d: &[f64]) -> [Vec<f64>; 2] {
    [cond.recovery[0].mul_vec(d), cond.recovery[1].mul_vec(d)]
}

/// Sizes and timings of one solve.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Diagnostics {
    /// Free displacement and rotation DOFs.
    pub n_dof_primal: usize,
    /// Free DOFs of the uncondensed mixed system.
    pub n_dof_mixed: usize,
    /// Dimension of the matrix actually factorized.
    pub n_dof_solved: usize,
    /// Structural nonzeros of the factorized matrix.
    pub nnz: usize,
    pub bandwidth: usize,
    /// Assembly, including the dual transform.
    pub assembly_s: f64,
    /// Condensation and factorization.
    pub factor_s: f64,
    pub solve_s: f64,
    pub lump_dev: Option<f64>,
}

/// Solution of one plate problem.
#[derive(Debug, Clone)]
pub struct PlateSolution {
    pub assembly: PatchAssembly,
    /// All displacement DOFs (`w` per control point, then `Θ₁, Θ₂` pairs),
    /// zero on the clamped boundary.
    pub displacement: Vec<f64>,
    /// Shear coefficients for the mixed variants.
    pub shear: Option<[Vec<f64>; 2]>,
    pub diagnostics: Diagnostics,
}

impl PlateSolution {
    /// Deflection at a parametric point of one patch.
    pub fn deflection(&self, patch: usize, xi: f64, eta: f64) -> Result<f64, SplineError> {
        let geo = &self.assembly.spaces[patch].geometry;
        let ev = geo.eval(xi, eta)?;
        let map = &self.assembly.cp_map[patch];
        Ok(ev
            .basis
            .indices(geo.m())
            .zip(&ev.basis.values)
            .map(|(k, r)| r * self.displacement[map[k]])
            .sum())
    }

    /// Rotations `(Θ₁, Θ₂)` at a parametric point of one patch.
    pub fn rotation(&self, patch: usize, xi: f64, eta: f64) -> Result<[f64; 2], SplineError> {
        let geo = &self.assembly.spaces[patch].geometry;
        let ev = geo.eval(xi, eta)?;
        let map = &self.assembly.cp_map[patch];
        let n = self.assembly.n_cp;
        let mut out = [0.0; 2];
        for (k, r) in ev.basis.indices(geo.m()).zip(&ev.basis.values) {
            out[0] += r * self.displacement[n + 2 * map[k]];
            out[1] += r * self.displacement[n + 2 * map[k] + 1];
        }
        Ok(out)
    }

    /// Shear force `S_α` at a parametric point of one patch.
    pub fn shear_force(&self, alpha: usize, patch: usize, xi: f64, eta: f64) -> Option<f64> {
        let s = self.shear.as_ref()?;
        let sp = &self.assembly.spaces[patch].shear[alpha];
        let ev = sp.eval(xi, eta, 0).ok()?;
        let off = self.assembly.shear_offsets[alpha][patch];
        Some(ev.indices(sp.m()).zip(&ev.values).map(|(k, r)| r * s[alpha][off + k]).sum())
    }
}

fn solve_with_stats(
    k: &SparseMatrix,
    f: &[f64],
    diag: &mut Diagnostics,
) -> Result<Vec<f64>, CondensationError> {
    let (nnz, bw) = nnz_and_bandwidth(k);
    diag.nnz = nnz;
    diag.bandwidth = bw;
    diag.n_dof_solved = k.nrows();
    let (x, times) = solve_timed(k, f)?;
    diag.factor_s += times.factor_s;
    diag.solve_s += times.solve_s;
    Ok(x)
}

/// Runs one variant on a set of coarse patches.
pub fn solve_variant<F>(
    patches: &[SurfacePatch],
    material: &PlateMaterial,
    load: &F,
    config: &SolveConfig,
) -> Result<PlateSolution, CondensationError>
where
    F: Fn(f64, f64) -> f64 + Sync + ?Sized,
{
    let asm = prepare_assembly(patches, config)?;
    solve_on_assembly(asm, material, load, config)
}

/// Runs one variant on already refined spaces.
pub fn solve_on_assembly<F>(
    asm: PatchAssembly,
    material: &PlateMaterial,
    load: &F,
    config: &SolveConfig,
) -> Result<PlateSolution, CondensationError>
where
    F: Fn(f64, f64) -> f64 + Sync + ?Sized,
{
    let report = clamped_dofs(&asm);
    let n_free = report.free.len();
    let mut diag = Diagnostics {
        n_dof_primal: n_free,
        n_dof_mixed: n_free + asm.n_shear[0] + asm.n_shear[1],
        ..Default::default()
    };
    let nd = asm.n_disp();

    if config.variant == SolverVariant::Std {
        let t0 = Instant::now();
        let (k, f) = assemble_primal(&asm, material, load)?;
        let k = k.select(&report.free, &report.free);
        let f: Vec<f64> = report.free.iter().map(|&i| f[i]).collect();
        diag.assembly_s = t0.elapsed().as_secs_f64();
        let x = solve_with_stats(&k, &f, &mut diag)?;
        return Ok(PlateSolution {
            displacement: report.expand(nd, &x),
            assembly: asm,
            shear: None,
            diagnostics: diag,
        });
    }

    let t0 = Instant::now();
    let (scheme, lumping, dual) = match config.variant {
        SolverVariant::Mxd => (Scheme::Galerkin, Lumping::Exact, None),
        SolverVariant::Lmp => (Scheme::Weighted, Lumping::RowSum, None),
        SolverVariant::Ad => (Scheme::Weighted, Lumping::Identity, Some(DualVariant::Ad)),
        SolverVariant::Ead => (Scheme::Weighted, Lumping::Identity, Some(DualVariant::Ead)),
        SolverVariant::Std => unreachable!(),
    };
    let system = match dual {
        None => assemble(&asm, material, scheme, load, None)?,
        Some(v) => {
            let transforms = build_transforms(&asm, v)?;
            let element_wise = match config.transform_path {
                TransformPath::Auto => asm.n_patches() > 1,
                TransformPath::Global => false,
                TransformPath::ElementWise => true,
            };
            if element_wise {
                assemble(&asm, material, scheme, load, Some(&transforms))?
            } else {
                let raw = assemble(&asm, material, scheme, load, None)?;
                pg_transform(&raw, &asm, &transforms)?
            }
        }
    };
    let (system, report) = apply_clamped_bc(&system, &asm);
    diag.assembly_s = t0.elapsed().as_secs_f64();

    if config.variant == SolverVariant::Mxd {
        let (k, f) = system.monolithic();
        let x = solve_with_stats(&k, &f, &mut diag)?;
        let (n1, n2) = (system.n_shear(0), system.n_shear(1));
        let s1 = x[n_free..n_free + n1].to_vec();
        let s2 = x[n_free + n1..n_free + n1 + n2].to_vec();
        return Ok(PlateSolution {
            displacement: report.expand(nd, &x[..n_free]),
            assembly: asm,
            shear: Some([s1, s2]),
            diagnostics: diag,
        });
    }

    let t1 = Instant::now();
    let cond = if asm.n_patches() > 1 {
        condense_patchwise(&system, &asm, lumping)?
    } else {
        condense(&system, lumping)?
    };
    diag.factor_s = t1.elapsed().as_secs_f64();
    diag.lump_dev = cond.lump_dev;
    let x = solve_with_stats(&cond.k, &cond.f, &mut diag)?;
    let shear = recover_shear(&cond, &x);
    Ok(PlateSolution {
        displacement: report.expand(nd, &x),
        assembly: asm,
        shear: Some(shear),
        diagnostics: diag,
    })
}

/// Solves a clamped mixed system without condensation and returns the free
/// displacement DOFs followed by both shear vectors.
pub fn solve_monolithic(system: &MixedSystem) -> Result<Vec<f64>, CondensationError> {
    let (k, f) = system.monolithic();
    Ok(crate::linalg::solve_direct(&k, &f)?)
}

/// Condenses with the given lumping and solves for the free displacement
/// DOFs.
pub fn solve_condensed(system: &MixedSystem, lumping: Lumping) -> Result<Vec<f64>, CondensationError> {
    let cond = condense(system, lumping)?;
    Ok(crate::linalg::solve_direct(&cond.k, &cond.f)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::plate::material;
    use crate::spline::{ControlNet, KnotVector};
    use approx::assert_relative_eq;

    fn unit_square() -> SurfacePatch {
        let kv = KnotVector::new(vec![0.0, 0.0, 1.0, 1.0], 1).unwrap();
        let pts = vec![[0.0, 0.0, 0.0], [0.0, 1.0, 0.0], [1.0, 0.0, 0.0], [1.0, 1.0, 0.0]];
        SurfacePatch::new(kv.clone(), kv, ControlNet::new(2, 2, pts, vec![1.0; 4]).unwrap()).unwrap()
    }

    fn mat(t: f64) -> PlateMaterial {
        material(10000.0, 0.3, t, 5.0 / 6.0).unwrap()
    }

    fn load(x: f64, y: f64) -> f64 {
        1.0 + x * y
    }

    fn rel_diff(a: &[f64], b: &[f64]) -> f64 {
        let num = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
        let den = b.iter().map(|y| y * y).sum::<f64>().sqrt();
        num / den
    }

    fn clamped(scheme: Scheme, deg: usize, level: u32, t: f64) -> (PatchAssembly, MixedSystem) {
        let cfg = SolveConfig::new(SolverVariant::Mxd, deg, level);
        let asm = prepare_assembly(&[unit_square()], &cfg).unwrap();
        let sys = assemble(&asm, &mat(t), scheme, &load, None).unwrap();
        let (sys, _) = apply_clamped_bc(&sys, &asm);
        (asm, sys)
    }

    #[test]
    fn exact_condensation_matches_saddle_solve() {
        for (deg, level) in [(2, 1), (3, 1), (2, 2)] {
            let (_, sys) = clamped(Scheme::Galerkin, deg, level, 0.1);
            let full = solve_monolithic(&sys).unwrap();
            let cond = solve_condensed(&sys, Lumping::Exact).unwrap();
            assert!(rel_diff(&cond, &full[..cond.len()]) < 1e-10, "p={deg} level={level}");
        }
    }

    #[test]
    fn identity_transform_changes_nothing() {
        let (asm, sys) = clamped(Scheme::Weighted, 2, 1, 0.1);
        let ids: Vec<PatchTransforms> = asm
            .spaces
            .iter()
            .map(|s| {
                [0, 1].map(|a| crate::dual::DualTransform2D::identity(s.shear[a].n(), s.shear[a].m()))
            })
            .collect();
        let out = pg_transform(&sys, &asm, &ids).unwrap();
        for a in 0..2 {
            assert_eq!(out.k_sd[a], sys.k_sd[a]);
            assert_eq!(out.k_ss[a], sys.k_ss[a]);
        }
    }

    #[test]
    fn pg_transform_keeps_exact_solution() {
        let (asm, sys) = clamped(Scheme::Weighted, 2, 1, 0.1);
        let tr = build_transforms(&asm, DualVariant::Ad).unwrap();
        let pg = pg_transform(&sys, &asm, &tr).unwrap();
        let a = solve_condensed(&sys, Lumping::Exact).unwrap();
        let b = solve_condensed(&pg, Lumping::Exact).unwrap();
        assert!(rel_diff(&b, &a) < 1e-9);
    }

    #[test]
    fn dual_blocks_lump_to_identity() {
        let cfg = SolveConfig {
            shear_weights: ShearWeights::Bspline,
            ..SolveConfig::new(SolverVariant::Ad, 3, 2)
        };
        let asm = prepare_assembly(&[unit_square()], &cfg).unwrap();
        let tr = build_transforms(&asm, DualVariant::Ad).unwrap();
        let sys = assemble(&asm, &mat(0.1), Scheme::Weighted, &load, None).unwrap();
        let pg = pg_transform(&sys, &asm, &tr).unwrap();
        for a in 0..2 {
            assert!(lumping_deviation(&pg.k_ss[a]) < 1e-8);
        }
    }

    #[test]
    fn identity_lumping_of_identity_block() {
        let d = row_sum_lump(&SparseMatrix::identity(4)).unwrap();
        assert_eq!(d, vec![1.0; 4]);
        let bad = SparseMatrix::from_triplets(2, 2, vec![(0, 0, 1.0), (1, 1, 1.0), (1, 0, -2.0)]);
        assert!(matches!(
            row_sum_lump(&bad),
            Err(CondensationError::NonPositiveDiagonal { row: 1, .. })
        ));
    }

    #[test]
    fn row_sum_diagonal_matches_quadrature() {
        // on the unit square with unit weights each entry is ∫ N_i dξ dη
        let (asm, sys) = clamped(Scheme::Weighted, 2, 1, 0.1);
        let d = row_sum_lump(&sys.k_ss[0]).unwrap();
        let sp = &asm.spaces[0].shear[0];
        let gauss = crate::quadrature::GaussLegendre::new(4);
        for (k, &dk) in d.iter().enumerate() {
            let (i, j) = (k / sp.m(), k % sp.m());
            let mut integral = 0.0;
            for ((u0, u1), (v0, v1)) in asm.spaces[0].elements() {
                for (x, wx) in gauss.mapped(u0, u1) {
                    for (y, wy) in gauss.mapped(v0, v1) {
                        let e = sp.eval(x, y, 0).unwrap();
                        let pos = e.indices(sp.m()).position(|g| g == i * sp.m() + j);
                        if let Some(pos) = pos {
                            integral += wx * wy * e.values[pos];
                        }
                    }
                }
            }
            assert_relative_eq!(dk, integral, max_relative = 1e-12);
        }
    }

    #[test]
    fn recovered_shear_balances_lumped_rows() {
        let cfg = SolveConfig::new(SolverVariant::Ead, 2, 2);
        let asm = prepare_assembly(&[unit_square()], &cfg).unwrap();
        let tr = build_transforms(&asm, DualVariant::Ead).unwrap();
        let sys = assemble(&asm, &mat(0.1), Scheme::Weighted, &load, Some(&tr)).unwrap();
        let (sys, _) = apply_clamped_bc(&sys, &asm);
        let cond = condense(&sys, Lumping::Identity).unwrap();
        let d = crate::linalg::solve_direct(&cond.k, &cond.f).unwrap();
        let s = recover_shear(&cond, &d);
        let fnorm = cond.f.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        for a in 0..2 {
            let r = sys.k_sd[a].mul_vec(&d);
            for (ri, si) in r.iter().zip(&s[a]) {
                assert!((ri + si).abs() <= 1e-10 * fnorm);
            }
        }
        let zero = recover_shear(&cond, &vec![0.0; d.len()]);
        assert!(zero.iter().flatten().all(|v| *v == 0.0));
    }

    #[test]
    fn condensed_dimension_is_primal() {
        let cfg = SolveConfig::new(SolverVariant::Ead, 2, 2);
        let sol = solve_variant(&[unit_square()], &mat(0.1), &load, &cfg).unwrap();
        let d = sol.diagnostics;
        assert_eq!(d.n_dof_solved, d.n_dof_primal);
        assert!(d.n_dof_solved < d.n_dof_mixed);
        // 4×4 elements of degree 2: 6×6 net, 16 interior points
        assert_eq!(d.n_dof_primal, 48);
    }

    #[test]
    fn single_element_desk_case() {
        // one element, p = 2: only the center control point is free
        let (_, sys) = clamped(Scheme::Galerkin, 2, 0, 0.1);
        assert_eq!((sys.n_disp(), sys.dim()), (3, 15));
        // direct block elimination of the 15×15 system
        let (k, f) = sys.monolithic();
        let dense = k.to_dense();
        let x = dense.lu().solve(&nalgebra::DVector::from_vec(f)).unwrap();
        let cond = solve_condensed(&sys, Lumping::Exact).unwrap();
        for i in 0..3 {
            assert!((cond[i] - x[i]).abs() <= 1e-12 * x.amax());
        }
    }

    #[test]
    fn variant_names_round_trip() {
        for v in SolverVariant::ALL {
            assert_eq!(v.name().parse::<SolverVariant>().unwrap(), v);
        }
        assert!("foo".parse::<SolverVariant>().is_err());
    }
}
