//! Experiment specification files and `--set` overrides.

use std::path::PathBuf;

use oamtomo::qstate::ModeBasis;
use oamtomo::sensor::{ScanGeometry, DEFAULT_EXTENT, DEFAULT_PIXELS, DEFAULT_PLANES, DEFAULT_RANK_TOL};
use oamtomo::{Noise, SolverConfig};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::CliError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Kind {
    RankAnalysis,
    ErrorSweep,
    EntropySweep,
    SingleReconstruction,
    Simulate,
}

/// Mode set: exactly one of the three fields, or none for `ell_max = 7`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BasisSpec {
    /// Symmetric span −ℓ_max..=ℓ_max.
    pub ell_max: Option<u32>,
    /// Nonnegative span 0..d.
    pub nonnegative: Option<usize>,
    /// Explicit index list.
    pub ells: Option<Vec<i32>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeometrySpec {
    pub pixels: usize,
    pub extent: f64,
    /// Plane list ζ = z/z_R; a scan with Z planes uses its first Z entries.
    pub planes: Vec<f64>,
    pub rank_tol: f64,
}

impl Default for GeometrySpec {
    fn default() -> Self {
        Self {
            pixels: DEFAULT_PIXELS,
            extent: DEFAULT_EXTENT,
            planes: DEFAULT_PLANES.to_vec(),
            rank_tol: DEFAULT_RANK_TOL,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RankSpec {
    pub z_max: usize,
}

impl Default for RankSpec {
    fn default() -> Self {
        Self { z_max: 10 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ErrorSweepSpec {
    /// Symmetric-span sizes to sweep; empty means the `basis` section alone.
    pub ell_max_values: Vec<u32>,
    pub z_values: Vec<usize>,
    pub ranks: Vec<usize>,
    pub trials: usize,
}

impl Default for ErrorSweepSpec {
    fn default() -> Self {
        Self { ell_max_values: Vec::new(), z_values: vec![1, 2, 3], ranks: vec![1, 2, 4, 8, 15], trials: 50 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EntropySweepSpec {
    pub z_values: Vec<usize>,
    /// Number of states averaged per Z.
    pub states: usize,
    /// Draw random states of this rank instead of the test-state family.
    pub random_rank: Option<usize>,
}

impl Default for EntropySweepSpec {
    fn default() -> Self {
        Self { z_values: vec![1, 2, 3, 4], states: 20, random_rank: None }
    }
}

/// Where a simulated scan's true state comes from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case", deny_unknown_fields)]
pub enum StateSpec {
    Random { rank: usize },
    TestState { p: f64, theta: f64 },
    File { path: PathBuf },
}

impl Default for StateSpec {
    fn default() -> Self {
        StateSpec::Random { rank: 1 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulateSpec {
    pub state: StateSpec,
    pub z: usize,
}

impl Default for SimulateSpec {
    fn default() -> Self {
        Self { state: StateSpec::default(), z: 2 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReconstructSpec {
    /// Scan CSV files; their rows are concatenated.
    pub inputs: Vec<PathBuf>,
    /// Planes at which the estimate's scans are predicted.
    pub predict_planes: Vec<f64>,
    /// Also compute the multistart uniqueness entropy of the positive estimate.
    pub entropy: bool,
}

impl Default for ReconstructSpec {
    fn default() -> Self {
        Self { inputs: Vec::new(), predict_planes: vec![0.0, 1.0 / 3.0, 0.5, 1.0], entropy: false }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentSpec {
    /// Optional; when present it must match the subcommand.
    pub kind: Option<Kind>,
    pub seed: u64,
    pub basis: BasisSpec,
    pub geometry: GeometrySpec,
    pub noise: Noise,
    pub solver: SolverConfig,
    pub rank_analysis: RankSpec,
    pub error_sweep: ErrorSweepSpec,
    pub entropy_sweep: EntropySweepSpec,
    pub simulate: SimulateSpec,
    pub reconstruct: ReconstructSpec,
}

impl ExperimentSpec {
    /// Parses a spec document, applying `key=value` overrides first.
    pub fn from_json(text: Option<&str>, overrides: &[String]) -> Result<Self, CliError> {
        let mut value = match text {
            Some(t) => serde_json::from_str(t).map_err(|e| CliError::Spec(format!("spec is not valid JSON: {e}")))?,
            None => Value::Object(Default::default()),
        };
        for ov in overrides {
            apply_override(&mut value, ov)?;
        }
        serde_json::from_value(value).map_err(|e| CliError::Spec(e.to_string()))
    }

    pub fn basis(&self) -> Result<ModeBasis, CliError> {
        let b = &self.basis;
        let set = [b.ell_max.is_some(), b.nonnegative.is_some(), b.ells.is_some()];
        match set.iter().filter(|&&s| s).count() {
            0 => Ok(ModeBasis::symmetric(7)),
            1 => {
                if let Some(l) = b.ell_max {
                    Ok(ModeBasis::symmetric(l))
                } else if let Some(d) = b.nonnegative {
                    ModeBasis::nonnegative(d).map_err(|e| CliError::Spec(format!("basis.nonnegative: {e}")))
                } else {
                    ModeBasis::from_ells(b.ells.clone().unwrap_or_default())
                        .map_err(|e| CliError::Spec(format!("basis.ells: {e}")))
                }
            }
            _ => Err(CliError::Spec("basis: set only one of ell_max, nonnegative, ells".into())),
        }
    }

    /// Geometry using the first `z` planes of the plane list.
    pub fn geometry(&self, z: usize) -> Result<ScanGeometry, CliError> {
        let g = &self.geometry;
        if z == 0 || z > g.planes.len() {
            return Err(CliError::Spec(format!("geometry.planes: {z} planes requested, {} available", g.planes.len())));
        }
        ScanGeometry::new(g.pixels, g.extent, g.planes[..z].to_vec())
            .map_err(|e| CliError::Spec(format!("geometry: {e}")))
    }

    /// Checks everything the given command will use.
    pub fn validate(&self, kind: Kind) -> Result<(), CliError> {
        if let Some(k) = self.kind {
            if k != kind {
                return Err(CliError::Spec(format!("kind: spec is for {k:?}, command is {kind:?}")));
            }
        }
        let basis = self.basis()?;
        self.geometry(self.geometry.planes.len())?;
        if !(self.geometry.rank_tol > 0.0 && self.geometry.rank_tol < 1.0) {
            return Err(CliError::Spec("geometry.rank_tol: must lie in (0, 1)".into()));
        }
        self.solver.validate().map_err(|e| CliError::Spec(format!("solver: {e}")))?;
        if let Noise::Poisson { total_counts } = self.noise {
            if !(total_counts > 0.0 && total_counts.is_finite()) {
                return Err(CliError::Spec("noise.total_counts: must be positive".into()));
            }
        }
        match kind {
            Kind::RankAnalysis => {
                self.geometry(self.rank_analysis.z_max)
                    .map_err(|e| CliError::Spec(format!("rank_analysis.z_max: {e}")))?;
            }
            Kind::ErrorSweep => {
                let s = &self.error_sweep;
                if s.trials == 0 {
                    return Err(CliError::Spec("error_sweep.trials: must be at least 1".into()));
                }
                nonempty("error_sweep.z_values", &s.z_values)?;
                nonempty("error_sweep.ranks", &s.ranks)?;
                for &z in &s.z_values {
                    self.geometry(z).map_err(|e| CliError::Spec(format!("error_sweep.z_values: {e}")))?;
                }
                for b in self.sweep_bases()? {
                    if let Some(&r) = s.ranks.iter().find(|&&r| r == 0 || r > b.dim()) {
                        return Err(CliError::Spec(format!(
                            "error_sweep.ranks: rank {r} is outside 1..={} for d = {}",
                            b.dim(),
                            b.dim()
                        )));
                    }
                }
            }
            Kind::EntropySweep => {
                let s = &self.entropy_sweep;
                if s.states == 0 {
                    return Err(CliError::Spec("entropy_sweep.states: must be at least 1".into()));
                }
                if self.solver.multistart < 2 {
                    return Err(CliError::Spec("solver.multistart: entropy needs at least 2".into()));
                }
                nonempty("entropy_sweep.z_values", &s.z_values)?;
                for &z in &s.z_values {
                    self.geometry(z).map_err(|e| CliError::Spec(format!("entropy_sweep.z_values: {e}")))?;
                }
                match s.random_rank {
                    Some(r) if r == 0 || r > basis.dim() => {
                        return Err(CliError::Spec(format!(
                            "entropy_sweep.random_rank: {r} is outside 1..={}",
                            basis.dim()
                        )));
                    }
                    Some(_) => {}
                    None => {
                        for ell in [-3, 0, 3] {
                            if basis.index_of(ell).is_none() {
                                return Err(CliError::Spec(format!("basis: the test-state family needs ℓ = {ell}")));
                            }
                        }
                    }
                }
            }
            Kind::Simulate => {
                self.geometry(self.simulate.z).map_err(|e| CliError::Spec(format!("simulate.z: {e}")))?;
                match &self.simulate.state {
                    StateSpec::Random { rank } if *rank == 0 || *rank > basis.dim() => {
                        return Err(CliError::Spec(format!(
                            "simulate.state.rank: {rank} is outside 1..={}",
                            basis.dim()
                        )));
                    }
                    StateSpec::TestState { p, .. } if !(0.0..=1.0).contains(p) => {
                        return Err(CliError::Spec(format!("simulate.state.p: {p} is outside [0, 1]")));
                    }
                    StateSpec::File { path } if !path.is_file() => {
                        return Err(CliError::Spec(format!("simulate.state.path: {} not found", path.display())));
                    }
                    _ => {}
                }
            }
            Kind::SingleReconstruction => {
                let s = &self.reconstruct;
                if s.inputs.is_empty() {
                    return Err(CliError::Spec("reconstruct.inputs: no scan files given".into()));
                }
                if let Some(p) = s.inputs.iter().find(|p| !p.is_file()) {
                    return Err(CliError::Spec(format!("reconstruct.inputs: {} not found", p.display())));
                }
                if !s.predict_planes.is_empty() {
                    ScanGeometry::new(self.geometry.pixels, self.geometry.extent, s.predict_planes.clone())
                        .map_err(|e| CliError::Spec(format!("reconstruct.predict_planes: {e}")))?;
                }
                if s.entropy && self.solver.multistart < 2 {
                    return Err(CliError::Spec("solver.multistart: entropy needs at least 2".into()));
                }
            }
        }
        Ok(())
    }

    /// Bases of an error sweep, one per swept dimension.
    pub fn sweep_bases(&self) -> Result<Vec<ModeBasis>, CliError> {
        if self.error_sweep.ell_max_values.is_empty() {
            Ok(vec![self.basis()?])
        } else {
            Ok(self.error_sweep.ell_max_values.iter().map(|&l| ModeBasis::symmetric(l)).collect())
        }
    }
}

fn nonempty<T>(name: &str, v: &[T]) -> Result<(), CliError> {
    if v.is_empty() {
        Err(CliError::Spec(format!("{name}: must not be empty")))
    } else {
        Ok(())
    }
}

/// Sets `a.b.c=value` inside a JSON document. The value is parsed as JSON
/// when possible and taken as a string otherwise.
pub fn apply_override(doc: &mut Value, assignment: &str) -> Result<(), CliError> {
    let (path, raw) =
        assignment.split_once('=').ok_or_else(|| CliError::Spec(format!("--set {assignment}: expected key=value")))?;
    let keys: Vec<&str> = path.split('.').collect();
    if keys.iter().any(|k| k.is_empty()) {
        return Err(CliError::Spec(format!("--set {assignment}: empty key segment")));
    }
    let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    let mut cur = doc;
    for (i, key) in keys.iter().enumerate() {
        if !cur.is_object() {
            if cur.is_null() {
                *cur = Value::Object(Default::default());
            } else {
                return Err(CliError::Spec(format!("--set {assignment}: {} is not an object", keys[..i].join("."))));
            }
        }
        let obj = cur.as_object_mut().expect("checked above");
        if i + 1 == keys.len() {
            obj.insert(key.to_string(), value);
            return Ok(());
        }
        cur = obj.entry(key.to_string()).or_insert(Value::Object(Default::default()));
    }
    unreachable!("keys is non-empty")
}
