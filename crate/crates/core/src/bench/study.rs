//! Convergence studies over variants, degrees, thicknesses and levels.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use crate::condensation::{solve_variant, SolveConfig, SolverVariant};
use crate::plate::ShearWeights;

use super::catalog::Geometry;
use super::problem::{benchmark_material, l2_error, load_function, reference_deflection, LENGTH};
use super::{resolve_geometry, BenchError};

/// Pinned CSV header.
pub const CSV_HEADER: [&str; 15] = [
    "geometry",
    "variant",
    "p",
    "t",
    "level",
    "elems_per_dir",
    "n_dof_primal",
    "n_dof_mixed",
    "nnz_condensed",
    "l2_error",
    "rate",
    "assembly_s",
    "factor_s",
    "solve_s",
    "lump_dev",
];

#[derive(Debug, Clone, PartialEq)]
pub struct StudyConfig {
    /// Catalog name or path of a geometry file.
    pub geometry: String,
    pub variants: Vec<SolverVariant>,
    pub degrees: Vec<usize>,
    pub levels: Vec<u32>,
    pub thicknesses: Vec<f64>,
    pub continuity_reduction: bool,
    pub shear_weights: ShearWeights,
    pub out: Option<PathBuf>,
    /// Record wall times; without them the CSV is byte-for-byte
    /// reproducible.
    pub timings: bool,
    /// Worker threads for the cell pool; `None` uses all cores.
    pub threads: Option<usize>,
}

impl StudyConfig {
    pub fn new(geometry: &str) -> Self {
        Self {
            geometry: geometry.to_string(),
            variants: vec![SolverVariant::Ead],
            degrees: vec![2],
            levels: (0..=6).collect(),
            thicknesses: vec![0.01],
            continuity_reduction: true,
            shear_weights: ShearWeights::Nurbs,
            out: None,
            timings: true,
            threads: None,
        }
    }

    pub fn validate(&self) -> Result<(), BenchError> {
        let bad = |m: &str| Err(BenchError::Config { line: 0, message: m.to_string() });
        if self.levels.len() < 2 {
            return bad("at least two levels are needed to compute a rate");
        }
        if self.variants.is_empty() || self.degrees.is_empty() || self.thicknesses.is_empty() {
            return bad("variant, degree and thickness lists must not be empty");
        }
        Ok(())
    }
}

fn parse_list<T, F>(line: usize, value: &str, f: F) -> Result<Vec<T>, BenchError>
where
    F: Fn(&str) -> Result<T, String>,
{
    value
        .split(',')
        .map(|s| s.trim())
        .filter(|s| !s.is_empty())
        .map(|s| f(s).map_err(|message| BenchError::Config { line, message }))
        .collect()
}

fn one<T>(line: usize, r: Result<T, String>) -> Result<T, BenchError> {
    r.map_err(|message| BenchError::Config { line, message })
}

fn parse_bool(s: &str) -> Result<bool, String> {
    match s {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        _ => Err(format!("'{s}' is not a boolean")),
    }
}

pub fn parse_shear_weights(s: &str) -> Result<ShearWeights, String> {
    match s {
        "nurbs" => Ok(ShearWeights::Nurbs),
        "bspline" => Ok(ShearWeights::Bspline),
        _ => Err(format!("unknown shear weighting '{s}' (expected nurbs or bspline)")),
    }
}

/// Parses `key = value` lines; keys mirror the command line flags and lists
/// are comma separated.
pub fn parse_study_config(text: &str) -> Result<StudyConfig, BenchError> {
    let mut cfg = StudyConfig::new("");
    let mut have_geometry = false;
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let (key, value) = content.split_once('=').ok_or_else(|| BenchError::Config {
            line,
            message: format!("expected 'key = value', found '{content}'"),
        })?;
        let (key, value) = (key.trim(), value.trim());
        match key {
            "geometry" => {
                cfg.geometry = value.to_string();
                have_geometry = true;
            }
            "variant" => cfg.variants = parse_list(line, value, |s| s.parse())?,
            "degree" => cfg.degrees = parse_list(line, value, |s| s.parse().map_err(|_| format!("bad degree '{s}'")))?,
            "level" => cfg.levels = parse_list(line, value, |s| s.parse().map_err(|_| format!("bad level '{s}'")))?,
            "thickness" => {
                cfg.thicknesses = parse_list(line, value, |s| {
                    s.parse::<f64>()
                        .ok()
                        .filter(|t| *t > 0.0)
                        .ok_or_else(|| format!("bad thickness '{s}'"))
                })?
            }
            "no-continuity-reduction" => cfg.continuity_reduction = !one(line, parse_bool(value))?,
            "shear-weights" => cfg.shear_weights = one(line, parse_shear_weights(value))?,
            "out" => cfg.out = Some(PathBuf::from(value)),
            "timings" => cfg.timings = one(line, parse_bool(value))?,
            "threads" => {
                cfg.threads = Some(one(line, value.parse::<usize>().map_err(|_| format!("bad thread count '{value}'")))?)
            }
            _ => {
                return Err(BenchError::Config {
                    line,
                    message: format!("unknown key '{key}'"),
                })
            }
        }
    }
    if !have_geometry {
        return Err(BenchError::Config {
            line: 0,
            message: "missing 'geometry'".to_string(),
        });
    }
    cfg.validate()?;
    Ok(cfg)
}

pub fn read_study_config(path: &Path) -> Result<StudyConfig, BenchError> {
    let text = std::fs::read_to_string(path).map_err(|e| BenchError::Io(format!("{}: {e}", path.display())))?;
    parse_study_config(&text)
}

/// Result of one study cell.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceRecord {
    pub geometry: String,
    pub variant: SolverVariant,
    pub p: usize,
    pub t: f64,
    pub level: u32,
    /// Largest element count along one parametric direction of any patch.
    pub elems_per_dir: usize,
    pub n_dof_primal: usize,
    pub n_dof_mixed: usize,
    /// Dimension of the factorized matrix.
    pub n_dof_solved: usize,
    pub nnz_condensed: usize,
    /// L2 deflection error, or the tag of the failure.
    pub l2_error: Result<f64, String>,
    /// `log₂(e_{ℓ−1} / e_ℓ)`, when the previous level succeeded.
    pub rate: Option<f64>,
    pub assembly_s: f64,
    pub factor_s: f64,
    pub solve_s: f64,
    pub lump_dev: Option<f64>,
}

impl ConvergenceRecord {
    /// Mesh size `L / elems_per_dir`.
    pub fn h(&self) -> f64 {
        LENGTH / self.elems_per_dir as f64
    }

    pub fn failed(&self) -> bool {
        self.l2_error.is_err()
    }

    fn csv_row(&self) -> Vec<String> {
        let opt = |v: Option<f64>| v.map(|x| format!("{x:e}")).unwrap_or_default();
        let ok = self.l2_error.is_ok();
        let count = |n: usize| if ok { n.to_string() } else { String::new() };
        vec![
            self.geometry.clone(),
            self.variant.to_string(),
            self.p.to_string(),
            self.t.to_string(),
            self.level.to_string(),
            count(self.elems_per_dir),
            count(self.n_dof_primal),
            count(self.n_dof_mixed),
            count(self.nnz_condensed),
            match &self.l2_error {
                Ok(e) => format!("{e:e}"),
                Err(tag) => format!("error:{tag}"),
            },
            opt(self.rate),
            format!("{:e}", self.assembly_s),
            format!("{:e}", self.factor_s),
            format!("{:e}", self.solve_s),
            opt(self.lump_dev),
        ]
    }
}

/// Solves one cell of a study.
pub fn run_cell(
    geometry: &Geometry,
    variant: SolverVariant,
    p: usize,
    t: f64,
    level: u32,
    config: &StudyConfig,
) -> ConvergenceRecord {
    let mut rec = ConvergenceRecord {
        geometry: geometry.name.clone(),
        variant,
        p,
        t,
        level,
        elems_per_dir: 0,
        n_dof_primal: 0,
        n_dof_mixed: 0,
        n_dof_solved: 0,
        nnz_condensed: 0,
        l2_error: Err(String::new()),
        rate: None,
        assembly_s: 0.0,
        factor_s: 0.0,
        solve_s: 0.0,
        lump_dev: None,
    };
    let mat = match benchmark_material(t) {
        Ok(m) => m,
        Err(e) => {
            rec.l2_error = Err(crate::condensation::CondensationError::from(e).tag().to_string());
            return rec;
        }
    };
    let solve_cfg = SolveConfig {
        continuity_reduction: config.continuity_reduction,
        shear_weights: config.shear_weights,
        ..SolveConfig::new(variant, p, level)
    };
    let load = |x: f64, y: f64| load_function(x / LENGTH, y / LENGTH, &mat);
    match solve_variant(&geometry.patches, &mat, &load, &solve_cfg) {
        Ok(sol) => {
            let d = sol.diagnostics;
            rec.elems_per_dir = sol
                .assembly
                .spaces
                .iter()
                .map(|s| {
                    let (a, b) = s.elements_per_dir();
                    a.max(b)
                })
                .max()
                .unwrap_or(0);
            rec.n_dof_primal = d.n_dof_primal;
            rec.n_dof_mixed = d.n_dof_mixed;
            rec.n_dof_solved = d.n_dof_solved;
            rec.nnz_condensed = d.nnz;
            if config.timings {
                rec.assembly_s = d.assembly_s;
                rec.factor_s = d.factor_s;
                rec.solve_s = d.solve_s;
            }
            rec.lump_dev = d.lump_dev;
            rec.l2_error = l2_error(&sol, |x, y| reference_deflection(x, y, &mat)).map_err(|_| "Spline".to_string());
        }
        Err(e) => rec.l2_error = Err(e.tag().to_string()),
    }
    rec
}

/// Fills in observed rates between consecutive levels of the same series.
pub fn compute_rates(records: &mut [ConvergenceRecord]) {
    let mut prev: BTreeMap<(SolverVariant, usize, u64), (u32, Option<f64>)> = BTreeMap::new();
    for r in records.iter_mut() {
        let key = (r.variant, r.p, r.t.to_bits());
        let err = r.l2_error.as_ref().ok().copied();
        r.rate = match (prev.get(&key), err) {
            (Some(&(lvl, Some(e0))), Some(e1)) if lvl + 1 == r.level && e1 > 0.0 && e0 > 0.0 => Some((e0 / e1).log2()),
            _ => None,
        };
        prev.insert(key, (r.level, err));
    }
}

/// Least-squares slope of `−log₂ e` against the level over the given
/// records (failed cells are skipped).
pub fn least_squares_rate(records: &[&ConvergenceRecord]) -> Option<f64> {
    let pts: Vec<(f64, f64)> = records
        .iter()
        .filter_map(|r| r.l2_error.as_ref().ok().map(|e| (r.level as f64, -e.log2())))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    Some(sxy / sxx)
}

/// Runs every cell of the study, in parallel, and returns the records in
/// deterministic order: variant, degree, thickness, level.
pub fn run_convergence_study(config: &StudyConfig) -> Result<Vec<ConvergenceRecord>, BenchError> {
    config.validate()?;
    let geometry = resolve_geometry(&config.geometry)?;
    let mut levels = config.levels.clone();
    levels.sort_unstable();
    levels.dedup();
    let mut cells = Vec::new();
    for &v in &config.variants {
        for &p in &config.degrees {
            for &t in &config.thicknesses {
                for &l in &levels {
                    cells.push((v, p, t, l));
                }
            }
        }
    }
    let run = || -> Vec<ConvergenceRecord> {
        cells
            .par_iter()
            .map(|&(v, p, t, l)| run_cell(&geometry, v, p, t, l, config))
            .collect()
    };
    let mut records = match config.threads {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| BenchError::Io(e.to_string()))?
            .install(run),
        None => run(),
    };
    compute_rates(&mut records);
    Ok(records)
}

/// Writes records with the pinned header.
pub fn write_csv<W: Write>(records: &[ConvergenceRecord], out: W) -> Result<(), BenchError> {
    let mut w = csv::Writer::from_writer(out);
    let csv_err = |e: csv::Error| BenchError::Io(e.to_string());
    w.write_record(CSV_HEADER).map_err(csv_err)?;
    for r in records {
        w.write_record(r.csv_row()).map_err(csv_err)?;
    }
    w.flush().map_err(|e| BenchError::Io(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(level: u32, e: Result<f64, String>) -> ConvergenceRecord {
        ConvergenceRecord {
            geometry: "g".into(),
            variant: SolverVariant::Ead,
            p: 2,
            t: 0.1,
            level,
            elems_per_dir: 1 << level,
            n_dof_primal: 1,
            n_dof_mixed: 2,
            n_dof_solved: 1,
            nnz_condensed: 1,
            l2_error: e,
            rate: None,
            assembly_s: 0.0,
            factor_s: 0.0,
            solve_s: 0.0,
            lump_dev: None,
        }
    }

    #[test]
    fn rates_follow_levels() {
        let mut r = vec![rec(0, Ok(1.0)), rec(1, Ok(0.125)), rec(2, Err("X".into())), rec(3, Ok(0.001))];
        compute_rates(&mut r);
        assert_eq!(r[0].rate, None);
        assert!((r[1].rate.unwrap() - 3.0).abs() < 1e-14);
        assert_eq!(r[2].rate, None);
        assert_eq!(r[3].rate, None);
        let refs: Vec<&ConvergenceRecord> = r[..2].iter().collect();
        assert!((least_squares_rate(&refs).unwrap() - 3.0).abs() < 1e-14);
    }

    #[test]
    fn config_parsing() {
        let cfg = parse_study_config(
            "# study\ngeometry = c0_single\nvariant = ad, ead\ndegree = 2,3\nlevel = 1,2,3\nthickness = 1\nno-continuity-reduction = true\nshear-weights = bspline\ntimings = false\n",
        )
        .unwrap();
        assert_eq!(cfg.geometry, "c0_single");
        assert_eq!(cfg.variants, vec![SolverVariant::Ad, SolverVariant::Ead]);
        assert_eq!(cfg.degrees, vec![2, 3]);
        assert_eq!(cfg.levels, vec![1, 2, 3]);
        assert_eq!(cfg.thicknesses, vec![1.0]);
        assert!(!cfg.continuity_reduction);
        assert_eq!(cfg.shear_weights, ShearWeights::Bspline);
        assert!(!cfg.timings);

        for (text, line) in [
            ("geometry = a\nfoo = 1\n", 2),
            ("geometry = a\nvariant = xyz\n", 2),
            ("geometry = a\nlevel = 3\n", 0),
            ("level = 1,2\n", 0),
            ("geometry a\n", 1),
        ] {
            match parse_study_config(text) {
                Err(BenchError::Config { line: l, .. }) => assert_eq!(l, line, "{text:?}"),
                other => panic!("{text:?}: {other:?}"),
            }
        }
    }

    #[test]
    fn csv_layout() {
        let mut r = vec![rec(0, Ok(0.5)), rec(1, Err("SingularMatrix".into()))];
        r[0].lump_dev = Some(1e-9);
        let mut buf = Vec::new();
        write_csv(&r, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], CSV_HEADER.join(","));
        assert_eq!(lines[1], "g,ead,2,0.1,0,1,1,2,1,5e-1,,0e0,0e0,0e0,1e-9");
        assert_eq!(lines[2], "g,ead,2,0.1,1,,,,,error:SingularMatrix,,0e0,0e0,0e0,");
    }
}
