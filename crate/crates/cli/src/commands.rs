//! The experiments behind each subcommand. Each returns its table in memory;
//! writing files is left to the `write_*` helpers.

use std::f64::consts::PI;
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use nalgebra::DVector;
use oamtomo::derive_seed;
use oamtomo::io::{infer_geometry, read_density_file, read_scan_csv, scan_from_records, write_scan_file, ReportJson};
use oamtomo::qstate::{hs_error, random_state, test_state, DensityMatrix, ModeBasis};
use oamtomo::sensor::{build_measurement_map, independent_detections, simulate_scan, IntensityScan, ScanGeometry};
use oamtomo::solver::{Estimator, ReconstructionReport, Reconstructor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::CliError;
use crate::spec::{ExperimentSpec, StateSpec};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct RankRow {
    pub z: usize,
    pub n_z: usize,
    pub unknowns: usize,
}

/// n_Z for Z = 1..=z_max over prefixes of the plane list.
pub fn rank_analysis(spec: &ExperimentSpec) -> Result<Vec<RankRow>, CliError> {
    let basis = spec.basis()?;
    (1..=spec.rank_analysis.z_max)
        .map(|z| {
            let map = build_measurement_map(&basis, &spec.geometry(z)?);
            Ok(RankRow { z, n_z: independent_detections(&map, spec.geometry.rank_tol)?, unknowns: basis.real_dim() })
        })
        .collect()
}

/// One (dimension, Z, rank) cell of an error sweep.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SweepCell {
    pub dim: usize,
    pub z: usize,
    pub rank: usize,
    pub trials: usize,
    pub mean_positive: f64,
    pub var_positive: f64,
    /// Pseudoinverse estimate, trace-normalized.
    pub mean_pinv: f64,
    pub var_pinv: f64,
    /// Pseudoinverse estimate as solved.
    pub mean_pinv_raw: f64,
    pub var_pinv_raw: f64,
    /// Positive-branch runs that hit the iteration cap.
    pub nonconverged: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepResult {
    pub cells: Vec<SweepCell>,
}

impl SweepResult {
    pub fn cell(&self, dim: usize, z: usize, rank: usize) -> Option<&SweepCell> {
        self.cells.iter().find(|c| c.dim == dim && c.z == z && c.rank == rank)
    }

    pub fn nonconverged(&self) -> usize {
        self.cells.iter().map(|c| c.nonconverged).sum()
    }
}

struct Trial {
    positive: f64,
    pinv: f64,
    pinv_raw: f64,
    converged: bool,
}

/// Mean and sample variance.
fn moments(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = if v.len() > 1 { v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0) } else { 0.0 };
    (mean, var)
}

/// Seed of trial `t` of the states with dimension `d` and rank `r`; shared
/// across Z so every Z sees the same states.
fn state_seed(master: u64, d: usize, r: usize, t: usize) -> u64 {
    derive_seed(derive_seed(master, ((d as u64) << 32) | r as u64), t as u64)
}

pub fn error_sweep(spec: &ExperimentSpec) -> Result<SweepResult, CliError> {
    let s = &spec.error_sweep;
    let mut cells = Vec::new();
    for basis in spec.sweep_bases()? {
        let d = basis.dim();
        for &z in &s.z_values {
            let map = build_measurement_map(&basis, &spec.geometry(z)?);
            let rec = Reconstructor::with_rank_tol(&map, spec.geometry.rank_tol)?;
            let jobs: Vec<(usize, usize)> = s.ranks.iter().flat_map(|&r| (0..s.trials).map(move |t| (r, t))).collect();
            let trials = jobs
                .par_iter()
                .map(|&(r, t)| {
                    let seed = state_seed(spec.seed, d, r, t);
                    let rho = random_state(&basis, r, seed)?;
                    let scan = simulate_scan(&rho, &map, spec.noise, derive_seed(seed, z as u64))?;
                    let pos = rec.positive(&scan, &spec.solver)?;
                    let pinv = rec.pseudoinverse(&scan)?;
                    Ok(Trial {
                        positive: hs_error(&pos.estimate, &rho)?,
                        pinv: hs_error(&pinv.estimate, &rho)?,
                        pinv_raw: hs_error(&pinv.raw_estimate, &rho)?,
                        converged: pos.converged,
                    })
                })
                .collect::<Result<Vec<Trial>, CliError>>()?;
            for (k, &r) in s.ranks.iter().enumerate() {
                let cell = &trials[k * s.trials..(k + 1) * s.trials];
                let pick = |f: fn(&Trial) -> f64| -> Result<(f64, f64), CliError> {
                    let v: Vec<f64> = cell.iter().map(f).collect();
                    if v.iter().any(|x| !x.is_finite()) {
                        return Err(CliError::Core(oamtomo::Error::InvalidParameter(format!(
                            "non-finite error in cell d={d}, Z={z}, rank={r}"
                        ))));
                    }
                    Ok(moments(&v))
                };
                let (mean_positive, var_positive) = pick(|t| t.positive)?;
                let (mean_pinv, var_pinv) = pick(|t| t.pinv)?;
                let (mean_pinv_raw, var_pinv_raw) = pick(|t| t.pinv_raw)?;
                cells.push(SweepCell {
                    dim: d,
                    z,
                    rank: r,
                    trials: cell.len(),
                    mean_positive,
                    var_positive,
                    mean_pinv,
                    var_pinv,
                    mean_pinv_raw,
                    var_pinv_raw,
                    nonconverged: cell.iter().filter(|t| !t.converged).count(),
                });
            }
        }
    }
    Ok(SweepResult { cells })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EntropyRow {
    pub z: usize,
    pub states: usize,
    pub mean_positive: f64,
    pub var_positive: f64,
    pub mean_pinv: f64,
    pub var_pinv: f64,
}

/// Parameters (p, θ) of the `s`-th random test state: p ~ U(0, 1), θ ~ U(0, π).
pub fn test_state_params(master: u64, s: usize) -> (f64, f64) {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(master, s as u64));
    (rng.random_range(0.0..1.0), rng.random_range(0.0..PI))
}

pub fn entropy_sweep(spec: &ExperimentSpec) -> Result<Vec<EntropyRow>, CliError> {
    let basis = spec.basis()?;
    let n = spec.entropy_sweep.states;
    let states: Vec<DensityMatrix> = (0..n)
        .map(|s| match spec.entropy_sweep.random_rank {
            Some(r) => random_state(&basis, r, derive_seed(spec.seed, s as u64)),
            None => {
                let (p, theta) = test_state_params(spec.seed, s);
                test_state(p, theta, &basis)
            }
        })
        .collect::<Result<_, _>>()?;
    let mut rows = Vec::new();
    for &z in &spec.entropy_sweep.z_values {
        let map = build_measurement_map(&basis, &spec.geometry(z)?);
        let rec = Reconstructor::with_rank_tol(&map, spec.geometry.rank_tol)?;
        let values = states
            .par_iter()
            .enumerate()
            .map(|(s, rho)| {
                let seed = derive_seed(derive_seed(spec.seed, s as u64), z as u64);
                let scan = simulate_scan(rho, &map, spec.noise, seed)?;
                let cfg = oamtomo::SolverConfig { seed, ..spec.solver.clone() };
                let pos = rec.uniqueness_entropy(&scan, &cfg, Estimator::Positive)?;
                let pinv = rec.uniqueness_entropy(&scan, &cfg, Estimator::Pseudoinverse)?;
                Ok((pos, pinv))
            })
            .collect::<Result<Vec<(f64, f64)>, CliError>>()?;
        let (mean_positive, var_positive) = moments(&values.iter().map(|v| v.0).collect::<Vec<_>>());
        let (mean_pinv, var_pinv) = moments(&values.iter().map(|v| v.1).collect::<Vec<_>>());
        rows.push(EntropyRow { z, states: n, mean_positive, var_positive, mean_pinv, var_pinv });
    }
    Ok(rows)
}

/// The true state and its simulated scan.
pub fn simulate(spec: &ExperimentSpec) -> Result<(DensityMatrix, IntensityScan), CliError> {
    let basis = spec.basis()?;
    let rho = match &spec.simulate.state {
        StateSpec::Random { rank } => random_state(&basis, *rank, derive_seed(spec.seed, 0))?,
        StateSpec::TestState { p, theta } => test_state(*p, *theta, &basis)?,
        StateSpec::File { path } => {
            let rho = read_density_file(path).map_err(|e| CliError::data(path, e))?;
            if !rho.basis().same_modes(&basis) {
                return Err(CliError::Data(format!(
                    "{}: state modes {:?} differ from the spec basis {:?}",
                    path.display(),
                    rho.basis().ells(),
                    basis.ells()
                )));
            }
            rho
        }
    };
    let map = build_measurement_map(&basis, &spec.geometry(spec.simulate.z)?);
    let scan = simulate_scan(&rho, &map, spec.noise, derive_seed(spec.seed, 1))?;
    Ok((rho, scan))
}

/// Reads scan files and joins their planes into one scan.
pub fn read_scans(paths: &[PathBuf], pixels: usize, extent: f64) -> Result<IntensityScan, CliError> {
    let mut planes = Vec::new();
    let mut values = Vec::new();
    for path in paths {
        let file = File::open(path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
        let records = read_scan_csv(BufReader::new(file)).map_err(|e| CliError::data(path, e))?;
        let geom = infer_geometry(&records, extent).map_err(|e| CliError::data(path, e))?;
        if geom.n_pixels_per_side() != pixels {
            return Err(CliError::Data(format!(
                "{}: grid is {n}×{n}, spec expects {pixels}×{pixels}",
                path.display(),
                n = geom.n_pixels_per_side()
            )));
        }
        let scan = scan_from_records(&records, &geom).map_err(|e| CliError::data(path, e))?;
        planes.extend_from_slice(geom.planes());
        values.extend(scan.values().iter().copied());
    }
    let geom = ScanGeometry::new(pixels, extent, planes).map_err(|e| CliError::Data(format!("joined scans: {e}")))?;
    Ok(IntensityScan::new(geom, DVector::from_vec(values), None)?)
}

#[derive(Clone, Debug)]
pub struct Reconstruction {
    pub report: ReconstructionReport,
    pub metadata: serde_json::Value,
    /// Scans of the estimate at the requested prediction planes.
    pub predicted: Option<IntensityScan>,
}

pub fn reconstruct(spec: &ExperimentSpec) -> Result<Reconstruction, CliError> {
    let basis = spec.basis()?;
    let g = &spec.geometry;
    let scan = read_scans(&spec.reconstruct.inputs, g.pixels, g.extent)?;
    let map = build_measurement_map(&basis, scan.geometry());
    let rec = Reconstructor::with_rank_tol(&map, g.rank_tol)?;
    let mut report = rec.positive(&scan, &spec.solver)?;
    if spec.reconstruct.entropy {
        report.uniqueness_entropy = Some(rec.uniqueness_entropy(&scan, &spec.solver, Estimator::Positive)?);
    }
    let n_z = independent_detections(&map, g.rank_tol)?;
    let complete = n_z == basis.real_dim();
    let mut metadata = serde_json::json!({
        "ells": basis.ells(),
        "planes": scan.geometry().planes(),
        "independent_detections": n_z,
        "unknowns": basis.real_dim(),
        "informationally_complete": complete,
        "raw_trace": report.raw_trace,
        "degenerate_trace": report.degenerate_trace,
    });
    if !complete {
        metadata["note"] =
            format!("informationally incomplete: {n_z} independent detections for {} unknowns", basis.real_dim())
                .into();
    }
    let predicted = predict(&report, &basis, g.pixels, g.extent, &spec.reconstruct.predict_planes)?;
    Ok(Reconstruction { report, metadata, predicted })
}

fn predict(
    report: &ReconstructionReport,
    basis: &ModeBasis,
    pixels: usize,
    extent: f64,
    planes: &[f64],
) -> Result<Option<IntensityScan>, CliError> {
    if planes.is_empty() {
        return Ok(None);
    }
    let geom = ScanGeometry::new(pixels, extent, planes.to_vec())?;
    let map = build_measurement_map(basis, &geom);
    let values = map.apply(&report.estimate)?.map(|v| v.max(0.0));
    Ok(Some(IntensityScan::new(geom, values, None)?))
}

pub fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<(), CliError> {
    let mut w = csv::Writer::from_writer(BufWriter::new(File::create(path)?));
    for r in rows {
        w.serialize(r).map_err(|e| CliError::Io(std::io::Error::other(e)))?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, value).map_err(std::io::Error::other)?;
    writeln!(w)?;
    Ok(())
}

pub fn write_reconstruction(out: &Path, r: &Reconstruction) -> Result<Vec<PathBuf>, CliError> {
    let report = out.join("report.json");
    write_json(&report, &ReportJson::new(&r.report, Some(r.metadata.clone())))?;
    let mut written = vec![report];
    if let Some(p) = &r.predicted {
        let path = out.join("predicted_scan.csv");
        write_scan_file(&path, p)?;
        written.push(path);
    }
    Ok(written)
}
