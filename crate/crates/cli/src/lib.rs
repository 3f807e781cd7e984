//! Experiment harness for `oamtomo`: spec files, sweeps and the command line.

pub mod commands;
pub mod error;
pub mod spec;

use std::fs;
use std::io::BufReader;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use oamtomo::io::{
    infer_geometry, read_density_file, read_scan_csv, scan_from_records, write_density_file, write_scan_file,
};

pub use error::CliError;
pub use spec::{ExperimentSpec, Kind};

#[derive(Debug, Parser)]
#[command(name = "oamtomo", version, about = "Compressive tomography of OAM states from intensity scans")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// Experiment spec (JSON). Omitted fields take their defaults.
    #[arg(long, global = true)]
    pub spec: Option<PathBuf>,
    /// Output directory, created if missing.
    #[arg(long, global = true, default_value = ".")]
    pub out: PathBuf,
    /// Master seed; overrides the spec.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Override a spec field, e.g. `--set basis.ell_max=4`. Repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    pub set: Vec<String>,
    /// Fail with exit code 4 if any solve hits the iteration cap.
    #[arg(long, global = true)]
    pub strict: bool,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Independent detections n_Z for Z = 1..z_max.
    RankAnalysis,
    /// Reconstruction error against rank, Z and dimension.
    ErrorSweep,
    /// Uniqueness entropy of the test-state family against Z.
    EntropySweep,
    /// Reconstruct a state from scan CSV files.
    Reconstruct {
        /// Scan files, added to `reconstruct.inputs`.
        inputs: Vec<PathBuf>,
    },
    /// Simulate a scan of a state.
    Simulate,
    /// Check a spec and any scan (.csv) or state (.json) files.
    Validate { files: Vec<PathBuf> },
}

impl Command {
    fn kind(&self) -> Option<Kind> {
        match self {
            Command::RankAnalysis => Some(Kind::RankAnalysis),
            Command::ErrorSweep => Some(Kind::ErrorSweep),
            Command::EntropySweep => Some(Kind::EntropySweep),
            Command::Reconstruct { .. } => Some(Kind::SingleReconstruction),
            Command::Simulate => Some(Kind::Simulate),
            Command::Validate { .. } => None,
        }
    }
}

/// Loads the spec named on the command line and applies overrides.
pub fn load_spec(cli: &Cli) -> Result<ExperimentSpec, CliError> {
    let text = match &cli.spec {
        Some(p) => Some(fs::read_to_string(p).map_err(|e| CliError::Spec(format!("{}: {e}", p.display())))?),
        None => None,
    };
    let mut spec = ExperimentSpec::from_json(text.as_deref(), &cli.set)?;
    if let Some(seed) = cli.seed {
        spec.seed = seed;
    }
    if let Command::Reconstruct { inputs } = &cli.command {
        spec.reconstruct.inputs.extend(inputs.iter().cloned());
    }
    Ok(spec)
}

/// Runs a parsed command line and returns the files written.
pub fn run(cli: &Cli) -> Result<Vec<PathBuf>, CliError> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(CliError::Spec("--threads must be at least 1".into()));
        }
        // a second call in the same process keeps the first pool
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    let spec = load_spec(cli)?;
    let kind = cli.command.kind();
    match kind {
        Some(k) => spec.validate(k)?,
        None => {
            if let Some(k) = spec.kind {
                spec.validate(k)?;
            }
        }
    }
    if kind.is_some() {
        fs::create_dir_all(&cli.out)?;
    }
    let out = cli.out.as_path();
    match &cli.command {
        Command::RankAnalysis => {
            let path = out.join("rank_analysis.csv");
            commands::write_csv(&path, &commands::rank_analysis(&spec)?)?;
            Ok(vec![path])
        }
        Command::ErrorSweep => {
            let res = commands::error_sweep(&spec)?;
            let path = out.join("error_sweep.csv");
            commands::write_csv(&path, &res.cells)?;
            let bad = res.nonconverged();
            if cli.strict && bad > 0 {
                return Err(CliError::NotConverged(format!("{bad} positive-branch solves hit the iteration cap")));
            }
            Ok(vec![path])
        }
        Command::EntropySweep => {
            let path = out.join("entropy_sweep.csv");
            commands::write_csv(&path, &commands::entropy_sweep(&spec)?)?;
            Ok(vec![path])
        }
        Command::Simulate => {
            let (rho, scan) = commands::simulate(&spec)?;
            let state = out.join("state.json");
            let scan_path = out.join("scan.csv");
            write_density_file(&state, &rho)?;
            write_scan_file(&scan_path, &scan)?;
            Ok(vec![state, scan_path])
        }
        Command::Reconstruct { .. } => {
            let r = commands::reconstruct(&spec)?;
            let written = commands::write_reconstruction(out, &r)?;
            if cli.strict && !r.report.converged {
                return Err(CliError::NotConverged(format!(
                    "positive solve stopped at the cap of {} iterations",
                    spec.solver.max_iterations
                )));
            }
            Ok(written)
        }
        Command::Validate { files } => {
            for f in files {
                validate_file(f, spec.geometry.extent)?;
            }
            Ok(Vec::new())
        }
    }
}

/// Parses a scan CSV or a density-matrix JSON file, by extension.
pub fn validate_file(path: &Path, extent: f64) -> Result<(), CliError> {
    let ext = path.extension().and_then(|e| e.to_str()).unwrap_or("");
    match ext {
        "csv" => {
            let file = fs::File::open(path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
            let records = read_scan_csv(BufReader::new(file)).map_err(|e| CliError::data(path, e))?;
            let geom = infer_geometry(&records, extent).map_err(|e| CliError::data(path, e))?;
            scan_from_records(&records, &geom).map_err(|e| CliError::data(path, e))?;
            Ok(())
        }
        "json" => {
            if !path.is_file() {
                return Err(CliError::Data(format!("{}: not found", path.display())));
            }
            read_density_file(path).map_err(|e| CliError::data(path, e))?;
            Ok(())
        }
        _ => Err(CliError::Data(format!("{}: expected a .csv scan or a .json state", path.display()))),
    }
}
