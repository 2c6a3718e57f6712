//! Clamped square plate benchmark: geometries, load, closed-form solution
//! and convergence studies.

pub mod catalog;
pub mod geometry_file;
pub mod problem;
pub mod study;

use thiserror::Error;

pub use catalog::{geometry_catalog, Geometry, GEOMETRY_NAMES};
pub use geometry_file::{read_geometry_file, write_geometry_file};
pub use problem::{exact_displacement, l2_error, load_function, reference_deflection};
pub use study::{run_convergence_study, ConvergenceRecord, StudyConfig};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BenchError {
    #[error("unknown geometry '{0}'")]
    UnknownGeometry(String),
    #[error("line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("invalid geometry: {0}")]
    InvalidGeometry(String),
    #[error("config line {line}: {message}")]
    Config { line: usize, message: String },
    #[error("{0}")]
    Io(String),
}

/// Catalog entry by name, otherwise a geometry file path.
pub fn resolve_geometry(name_or_path: &str) -> Result<Geometry, BenchError> {
    match geometry_catalog(name_or_path) {
        Err(BenchError::UnknownGeometry(_)) if std::path::Path::new(name_or_path).is_file() => {
            read_geometry_file(std::path::Path::new(name_or_path))
        }
        other => other,
    }
}
