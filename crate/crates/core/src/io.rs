//! File formats.
//!
//! - Density matrices: JSON `{"ells": [...], "re": [[...]], "im": [[...]]}`.
//! - Intensity scans: CSV with header `plane_index,zeta,px,py,value`, one row
//!   per pixel, plane-major and row-major (py outer, px inner).
//! - Measurement maps: one JSON header line followed by the matrix as
//!   row-major little-endian f64.
//! - Reconstruction reports: JSON, estimate in the density-matrix schema.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::optics::BeamGeometry;
use crate::qstate::{DensityMatrix, DensityMatrixJson, HermitianOperator, ModeBasis};
use crate::sensor::{IntensityScan, MeasurementMap, ScanGeometry};
use crate::solver::ReconstructionReport;

pub const SCAN_HEADER: [&str; 5] = ["plane_index", "zeta", "px", "py", "value"];

/// Plane positions read from a file are matched to the expected ones within this.
const ZETA_TOL: f64 = 1e-9;

/// One CSV row of an intensity scan.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScanRecord {
    pub plane_index: usize,
    pub zeta: f64,
    pub px: usize,
    pub py: usize,
    pub value: f64,
}

pub fn scan_records(scan: &IntensityScan) -> Vec<ScanRecord> {
    let g = scan.geometry();
    let n = g.n_pixels_per_side();
    let mut out = Vec::with_capacity(g.len());
    for (j, &zeta) in g.planes().iter().enumerate() {
        for py in 0..n {
            for px in 0..n {
                let value = scan.values()[j * n * n + py * n + px];
                out.push(ScanRecord { plane_index: j, zeta, px, py, value });
            }
        }
    }
    out
}

pub fn write_scan_csv<W: Write>(writer: W, scan: &IntensityScan) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for rec in scan_records(scan) {
        w.serialize(rec).map_err(csv_error)?;
    }
    w.flush()?;
    Ok(())
}

/// Parses scan rows; errors carry the 1-based line number.
pub fn read_scan_csv<R: Read>(reader: R) -> Result<Vec<ScanRecord>> {
    let mut r = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(reader);
    let headers = r.headers().map_err(csv_error)?.clone();
    if headers.is_empty() || (headers.len() == 1 && headers[0].is_empty()) {
        return Err(Error::Parse { line: 1, msg: "empty scan file".into() });
    }
    if headers.iter().ne(SCAN_HEADER.iter().copied()) {
        return Err(Error::Parse {
            line: 1,
            msg: format!(
                "expected header {:?}, found {:?}",
                SCAN_HEADER.join(","),
                headers.iter().collect::<Vec<_>>().join(",")
            ),
        });
    }
    let mut out = Vec::new();
    for row in r.deserialize::<ScanRecord>() {
        out.push(row.map_err(csv_error)?);
    }
    if out.is_empty() {
        return Err(Error::Parse { line: 2, msg: "scan file has a header but no rows".into() });
    }
    Ok(out)
}

fn csv_error(e: csv::Error) -> Error {
    let line = e.position().map(|p| p.line() as usize).unwrap_or(0);
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::Parse { line, msg: format!("{other:?}") },
    }
}

/// Assembles a scan from rows, checking them against an expected geometry.
pub fn scan_from_records(records: &[ScanRecord], geometry: &ScanGeometry) -> Result<IntensityScan> {
    let n = geometry.n_pixels_per_side();
    let planes = geometry.planes();
    let mut values = DVector::from_element(geometry.len(), f64::NAN);
    for (i, rec) in records.iter().enumerate() {
        let line = i + 2;
        let bad = |msg: String| Error::Parse { line, msg };
        let zeta = *planes
            .get(rec.plane_index)
            .ok_or_else(|| bad(format!("plane_index {} but geometry has {} planes", rec.plane_index, planes.len())))?;
        if (zeta - rec.zeta).abs() > ZETA_TOL {
            return Err(bad(format!("plane {} has zeta {} but geometry expects {zeta}", rec.plane_index, rec.zeta)));
        }
        if rec.px >= n || rec.py >= n {
            return Err(bad(format!("pixel ({}, {}) outside a {n}x{n} grid", rec.px, rec.py)));
        }
        if !(rec.value.is_finite() && rec.value >= 0.0) {
            return Err(bad(format!("invalid value {}", rec.value)));
        }
        let idx = rec.plane_index * n * n + rec.py * n + rec.px;
        if !values[idx].is_nan() {
            return Err(bad(format!("duplicate pixel ({}, {}) in plane {}", rec.px, rec.py, rec.plane_index)));
        }
        values[idx] = rec.value;
    }
    if let Some(missing) = values.iter().position(|v| v.is_nan()) {
        let (plane, pix) = (missing / (n * n), missing % (n * n));
        return Err(Error::DimensionMismatch(format!(
            "scan is missing pixel ({}, {}) of plane {plane}",
            pix % n,
            pix / n
        )));
    }
    IntensityScan::new(geometry.clone(), values, None)
}

/// Grid size and plane list implied by a set of rows (extent is not stored in
/// the file and must be supplied).
pub fn infer_geometry(records: &[ScanRecord], extent: f64) -> Result<ScanGeometry> {
    let n = records.iter().map(|r| r.px.max(r.py) + 1).max().unwrap_or(0);
    let nplanes = records.iter().map(|r| r.plane_index + 1).max().unwrap_or(0);
    let mut planes = vec![f64::NAN; nplanes];
    for r in records {
        planes[r.plane_index] = r.zeta;
    }
    if planes.iter().any(|z| z.is_nan()) {
        return Err(Error::Format("plane indices are not contiguous".into()));
    }
    ScanGeometry::new(n, extent, planes)
}

pub fn read_scan_file(path: &Path, geometry: &ScanGeometry) -> Result<IntensityScan> {
    let records = read_scan_csv(BufReader::new(File::open(path)?))?;
    scan_from_records(&records, geometry)
}

pub fn write_scan_file(path: &Path, scan: &IntensityScan) -> Result<()> {
    write_scan_csv(BufWriter::new(File::create(path)?), scan)
}

pub fn read_density_file(path: &Path) -> Result<DensityMatrix> {
    let json: DensityMatrixJson = serde_json::from_reader(BufReader::new(File::open(path)?))?;
    json.to_density()
}

pub fn write_density_file<H: AsRef<HermitianOperator>>(path: &Path, h: H) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, &DensityMatrixJson::from_operator(h))?;
    writeln!(w)?;
    Ok(())
}

/// Header line of a measurement-map dump.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MapHeader {
    pub rows: usize,
    pub cols: usize,
    pub ells: Vec<i32>,
    pub geometry: BeamGeometry,
    pub n_pixels_per_side: usize,
    pub extent: f64,
    pub planes: Vec<f64>,
}

pub fn write_map_dump<W: Write>(mut w: W, map: &MeasurementMap) -> Result<()> {
    let g = map.geometry();
    let header = MapHeader {
        rows: map.nrows(),
        cols: map.ncols(),
        ells: map.basis().ells().to_vec(),
        geometry: *map.basis().geometry(),
        n_pixels_per_side: g.n_pixels_per_side(),
        extent: g.extent(),
        planes: g.planes().to_vec(),
    };
    serde_json::to_writer(&mut w, &header)?;
    w.write_all(b"\n")?;
    let m = map.matrix();
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            w.write_all(&m[(i, j)].to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn read_map_dump<R: Read>(reader: R) -> Result<MeasurementMap> {
    let mut r = BufReader::new(reader);
    let mut line = String::new();
    r.read_line(&mut line)?;
    let h: MapHeader = serde_json::from_str(line.trim_end())?;
    let basis = ModeBasis::new(h.ells, h.geometry)?;
    let geometry = ScanGeometry::new(h.n_pixels_per_side, h.extent, h.planes)?;
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)?;
    if bytes.len() != h.rows * h.cols * 8 {
        return Err(Error::Format(format!(
            "expected {} bytes of matrix data, found {}",
            h.rows * h.cols * 8,
            bytes.len()
        )));
    }
    let data: Vec<f64> = bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
    MeasurementMap::from_parts(basis, geometry, DMatrix::from_row_slice(h.rows, h.cols, &data))
}

/// JSON form of a [`ReconstructionReport`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportJson {
    pub estimate: DensityMatrixJson,
    pub objective_history: Vec<f64>,
    pub iterations_used: usize,
    pub converged: bool,
    pub uniqueness_entropy: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub metadata: Option<serde_json::Value>,
}

impl ReportJson {
    pub fn new(report: &ReconstructionReport, metadata: Option<serde_json::Value>) -> Self {
        Self {
            estimate: DensityMatrixJson::from_operator(&report.estimate),
            objective_history: report.objective_history.clone(),
            iterations_used: report.iterations_used,
            converged: report.converged,
            uniqueness_entropy: report.uniqueness_entropy,
            metadata,
        }
    }
}
