use std::fs::File;
use std::io::{self, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{ArgGroup, Parser, Subcommand};

use igaplate::bench::catalog::{geometry_catalog, GEOMETRY_NAMES};
use igaplate::bench::geometry_file::geometry_to_string;
use igaplate::bench::study::{parse_shear_weights, read_study_config, run_cell, write_csv, StudyConfig};
use igaplate::bench::{resolve_geometry, run_convergence_study, ConvergenceRecord};
use igaplate::condensation::SolverVariant;
use igaplate::plate::ShearWeights;

#[derive(Parser)]
#[command(name = "igaplate", version, about = "Clamped Reissner-Mindlin plate benchmark")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve one cell and print its record.
    Solve {
        /// Catalog name or geometry file.
        #[arg(long, value_name = "NAME|FILE")]
        geometry: String,
        #[arg(long, value_parser = ["std", "mxd", "lmp", "ad", "ead"])]
        variant: String,
        #[arg(long, value_name = "P")]
        degree: usize,
        #[arg(long, value_name = "L")]
        level: u32,
        #[arg(long, value_name = "T")]
        thickness: f64,
        #[arg(long)]
        no_continuity_reduction: bool,
        #[arg(long, value_parser = parse_shear_weights, default_value = "nurbs")]
        shear_weights: ShearWeights,
        /// Write the record as CSV instead of printing a summary.
        #[arg(long, value_name = "FILE")]
        out: Option<PathBuf>,
    },
    /// Run a convergence study described by a config file.
    Convergence {
        #[arg(long, value_name = "FILE")]
        config: PathBuf,
    },
    /// List the catalog or export one geometry in the text format.
    #[command(group(ArgGroup::new("action").required(true).args(["list", "export"])))]
    Geometry {
        #[arg(long)]
        list: bool,
        #[arg(long, value_name = "NAME")]
        export: Option<String>,
    },
}

fn write_records(records: &[ConvergenceRecord], out: Option<&PathBuf>) -> Result<(), String> {
    match out {
        Some(path) => {
            let f = File::create(path).map_err(|e| format!("{}: {e}", path.display()))?;
            write_csv(records, f).map_err(|e| e.to_string())
        }
        None => write_csv(records, io::stdout().lock()).map_err(|e| e.to_string()),
    }
}

fn run(cli: Cli) -> Result<bool, String> {
    match cli.command {
        Command::Solve {
            geometry,
            variant,
            degree,
            level,
            thickness,
            no_continuity_reduction,
            shear_weights,
            out,
        } => {
            let variant: SolverVariant = variant.parse()?;
            let geometry = resolve_geometry(&geometry).map_err(|e| e.to_string())?;
            let mut cfg = StudyConfig::new(&geometry.name);
            cfg.continuity_reduction = !no_continuity_reduction;
            cfg.shear_weights = shear_weights;
            let rec = run_cell(&geometry, variant, degree, thickness, level, &cfg);
            if out.is_some() {
                write_records(std::slice::from_ref(&rec), out.as_ref())?;
            } else {
                print_summary(&rec);
            }
            Ok(!rec.failed())
        }
        Command::Convergence { config } => {
            let cfg = read_study_config(&config).map_err(|e| format!("{}: {e}", config.display()))?;
            let records = run_convergence_study(&cfg).map_err(|e| e.to_string())?;
            write_records(&records, cfg.out.as_ref())?;
            for r in records.iter().filter(|r| r.failed()) {
                eprintln!(
                    "cell {} p={} t={} level={} failed: {}",
                    r.variant,
                    r.p,
                    r.t,
                    r.level,
                    r.l2_error.as_ref().unwrap_err()
                );
            }
            Ok(records.iter().all(|r| !r.failed()))
        }
        Command::Geometry { list, export } => {
            let mut stdout = io::stdout().lock();
            if list {
                for name in GEOMETRY_NAMES {
                    writeln!(stdout, "{name}").map_err(|e| e.to_string())?;
                }
            }
            if let Some(name) = export {
                let g = geometry_catalog(&name).map_err(|e| e.to_string())?;
                write!(stdout, "{}", geometry_to_string(&g.patches)).map_err(|e| e.to_string())?;
            }
            Ok(true)
        }
    }
}

fn print_summary(r: &ConvergenceRecord) {
    println!("geometry        {}", r.geometry);
    println!("variant         {}", r.variant);
    println!("degree          {}", r.p);
    println!("thickness       {}", r.t);
    println!("level           {}", r.level);
    match &r.l2_error {
        Ok(e) => {
            println!("elems_per_dir   {}", r.elems_per_dir);
            println!("n_dof_primal    {}", r.n_dof_primal);
            println!("n_dof_mixed     {}", r.n_dof_mixed);
            println!("n_dof_solved    {}", r.n_dof_solved);
            println!("nnz_condensed   {}", r.nnz_condensed);
            println!("l2_error        {e:e}");
            println!("assembly_s      {:.3e}", r.assembly_s);
            println!("factor_s        {:.3e}", r.factor_s);
            println!("solve_s         {:.3e}", r.solve_s);
            if let Some(d) = r.lump_dev {
                println!("lump_dev        {d:e}");
            }
        }
        Err(tag) => println!("error           {tag}"),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(msg) => {
            eprintln!("igaplate: {msg}");
            ExitCode::FAILURE
        }
    }
}
