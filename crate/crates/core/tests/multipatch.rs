use igaplate::bench::problem::{benchmark_material, l2_error, load_function, reference_deflection};
use igaplate::bench::study::StudyConfig;
use igaplate::bench::{geometry_catalog, run_convergence_study};
use igaplate::condensation::{
    build_transforms, condense, condense_patchwise, prepare_assembly, solve_variant, Lumping, SolveConfig,
    SolverVariant,
};
use igaplate::dual::DualVariant;
use igaplate::plate::{apply_clamped_bc, assemble, Scheme};

fn error(patches: &[igaplate::spline::SurfacePatch], variant: SolverVariant, level: u32, t: f64) -> f64 {
    let mat = benchmark_material(t).unwrap();
    let load = |x: f64, y: f64| load_function(x, y, &mat);
    let sol = solve_variant(patches, &mat, &load, &SolveConfig::new(variant, 2, level)).unwrap();
    l2_error(&sol, |x, y| reference_deflection(x, y, &mat)).unwrap()
}

#[test]
fn patch_order_does_not_matter() {
    for name in ["mp_c1", "mp_various"] {
        let mut patches = geometry_catalog(name).unwrap().patches;
        for variant in [SolverVariant::Mxd, SolverVariant::Ead] {
            let a = error(&patches, variant, 1, 0.01);
            patches.reverse();
            let b = error(&patches, variant, 1, 0.01);
            patches.reverse();
            assert!((a - b).abs() <= 1e-10 * a, "{name} {variant:?}: {a} vs {b}");
        }
    }
}

#[test]
fn patchwise_condensation_matches_global() {
    let mat = benchmark_material(0.01).unwrap();
    let load = |x: f64, y: f64| load_function(x, y, &mat);
    let g = geometry_catalog("mp_various").unwrap();
    for (variant, lumping) in [(SolverVariant::Ead, Lumping::Identity), (SolverVariant::Lmp, Lumping::RowSum)] {
        let asm = prepare_assembly(&g.patches, &SolveConfig::new(variant, 2, 1)).unwrap();
        let tr = (variant == SolverVariant::Ead).then(|| build_transforms(&asm, DualVariant::Ead).unwrap());
        let sys = assemble(&asm, &mat, Scheme::Weighted, &load, tr.as_deref()).unwrap();
        let (sys, _) = apply_clamped_bc(&sys, &asm);
        let global = condense(&sys, lumping).unwrap();
        let local = condense_patchwise(&sys, &asm, lumping).unwrap();
        let diff = global.k.add_scaled(1.0, &local.k, -1.0).max_abs();
        assert!(diff <= 1e-11 * global.k.max_abs(), "{variant:?}: {diff}");
    }
}

#[test]
fn errors_decrease_on_smooth_meshes() {
    let mut cfg = StudyConfig::new("undistorted");
    cfg.variants = vec![SolverVariant::Mxd, SolverVariant::Ead];
    cfg.degrees = vec![2, 3];
    cfg.levels = (0..=3).collect();
    cfg.thicknesses = vec![0.1];
    cfg.timings = false;
    let records = run_convergence_study(&cfg).unwrap();
    for pair in records.windows(2) {
        let (a, b) = (&pair[0], &pair[1]);
        if a.variant != b.variant || a.p != b.p {
            continue;
        }
        let (ea, eb) = (*a.l2_error.as_ref().unwrap(), *b.l2_error.as_ref().unwrap());
        assert!(eb < ea || ea < 1e-10, "{} p={} level {}: {ea} -> {eb}", a.variant, a.p, b.level);
    }
}
