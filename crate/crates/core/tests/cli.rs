use std::path::Path;
use std::process::{Command, Output};

use igaplate::bench::catalog::{geometry_catalog, GEOMETRY_NAMES};
use igaplate::bench::geometry_file::parse_geometry;
use igaplate::bench::study::CSV_HEADER;

fn igaplate(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_igaplate")).args(args).output().unwrap()
}

#[test]
fn geometry_list() {
    let out = igaplate(&["geometry", "--list"]);
    assert!(out.status.success());
    let names: Vec<String> = String::from_utf8(out.stdout).unwrap().lines().map(str::to_string).collect();
    assert_eq!(names, GEOMETRY_NAMES);
}

#[test]
fn geometry_export_round_trip() {
    for name in ["nurbs_distorted", "mp_various"] {
        let out = igaplate(&["geometry", "--export", name]);
        assert!(out.status.success());
        let text = String::from_utf8(out.stdout).unwrap();
        assert!(text.starts_with("igaplate-geometry v1"));
        assert_eq!(parse_geometry(&text).unwrap(), geometry_catalog(name).unwrap().patches);
    }
}

#[test]
fn geometry_needs_an_action() {
    let out = igaplate(&["geometry"]);
    assert!(!out.status.success());
    let out = igaplate(&["geometry", "--export", "disk"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("disk"));
}

#[test]
fn solve_summary() {
    let out = igaplate(&[
        "solve", "--geometry", "undistorted", "--variant", "ead", "--degree", "2", "--level", "1", "--thickness", "0.1",
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8(out.stdout).unwrap();
    let field = |key: &str| {
        text.lines()
            .find_map(|l| l.strip_prefix(key).map(|v| v.trim().to_string()))
            .unwrap()
    };
    assert_eq!(field("variant"), "ead");
    assert_eq!(field("elems_per_dir"), "2");
    assert_eq!(field("n_dof_solved"), field("n_dof_primal"));
    let err: f64 = field("l2_error").parse().unwrap();
    assert!(err > 0.0 && err < 1.0);
}

#[test]
fn solve_to_csv_from_geometry_file() {
    let dir = tempfile::tempdir().unwrap();
    let geo = dir.path().join("c1.geo");
    let csv = dir.path().join("solve.csv");
    let export = igaplate(&["geometry", "--export", "c1_single"]);
    std::fs::write(&geo, export.stdout).unwrap();
    let out = igaplate(&[
        "solve",
        "--geometry",
        geo.to_str().unwrap(),
        "--variant",
        "lmp",
        "--degree",
        "3",
        "--level",
        "0",
        "--thickness",
        "0.01",
        "--shear-weights",
        "bspline",
        "--no-continuity-reduction",
        "--out",
        csv.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let mut rd = csv::Reader::from_path(&csv).unwrap();
    assert_eq!(rd.headers().unwrap().iter().collect::<Vec<_>>(), CSV_HEADER);
    let rows: Vec<csv::StringRecord> = rd.records().map(Result::unwrap).collect();
    assert_eq!(rows.len(), 1);
    assert_eq!(&rows[0][1], "lmp");
    assert_eq!(&rows[0][2], "3");
    assert!(rows[0][9].parse::<f64>().unwrap() > 0.0);
}

#[test]
fn bad_variant_is_rejected() {
    let out = igaplate(&[
        "solve", "--geometry", "undistorted", "--variant", "fem", "--degree", "2", "--level", "0", "--thickness", "0.1",
    ]);
    assert!(!out.status.success());
}

fn convergence(dir: &Path, config: &str, name: &str) -> (Output, String) {
    let cfg = dir.join(format!("{name}.cfg"));
    let csv = dir.join(format!("{name}.csv"));
    std::fs::write(&cfg, format!("{config}\nout = {}\n", csv.display())).unwrap();
    let out = igaplate(&["convergence", "--config", cfg.to_str().unwrap()]);
    let text = std::fs::read_to_string(&csv).unwrap_or_default();
    (out, text)
}

#[test]
fn convergence_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let config = "geometry = mp_linear\nvariant = std, ead\ndegree = 2\nlevel = 0, 1, 2\nthickness = 0.1\ntimings = false";
    let (first, a) = convergence(dir.path(), config, "det-a");
    let (_, b) = convergence(dir.path(), config, "det-b");
    assert!(first.status.success(), "{}", String::from_utf8_lossy(&first.stderr));
    assert_eq!(a, b);
    let lines: Vec<&str> = a.lines().collect();
    assert_eq!(lines[0], CSV_HEADER.join(","));
    assert_eq!(lines.len(), 7);
    assert!(lines[1].starts_with("mp_linear,std,2,"));
}

#[test]
fn failed_cell_exits_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let config = "geometry = undistorted\nvariant = ead\ndegree = 1, 2\nlevel = 0, 1\nthickness = 0.1\ntimings = false";
    let (out, text) = convergence(dir.path(), config, "fail");
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("failed"));
    // the failing p = 1 cells are still written
    assert_eq!(text.lines().count(), 5);
}

#[test]
fn malformed_config_exits_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let (out, _) = convergence(dir.path(), "geometry = undistorted\nlevels = 0, 1", "bad");
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("unknown key"));
}
