//! Compressive tomography of orbital-angular-momentum photon states.
//!
//! The crate builds the pixel-level measurement model of camera intensity
//! scans of Laguerre-Gauss superpositions taken at several propagation
//! planes, and reconstructs low-rank density matrices from those scans by
//! least squares under a positivity constraint.
//!
//! - [`optics`]: LG mode amplitudes, beam radius, Gouy phase, curvature.
//! - [`qstate`]: density matrices, Hermitian vectorization, random states.
//! - [`sensor`]: scan geometry, measurement map, rank analysis, simulation.
//! - [`solver`]: projected-gradient and pseudoinverse estimators, entropy.
//! - [`io`]: file formats for states, scans, maps and reports.

pub mod error;
pub mod io;
pub mod optics;
pub mod qstate;
pub mod sensor;
pub mod solver;

pub use error::{Error, Result};
pub use optics::{BeamGeometry, ModeIndex, TransversePoint};
pub use qstate::{DensityMatrix, HermitianOperator, HermitianVector, ModeBasis, TraceMode};
pub use sensor::{IntensityScan, MeasurementMap, Noise, ScanGeometry, ScanPoint};
pub use solver::{Estimator, ReconstructionReport, Reconstructor, SolverConfig, StepRule};

/// Seed for sub-task `index` of a run seeded with `master` (SplitMix64 mixing).
pub fn derive_seed(master: u64, index: u64) -> u64 {
    let mut z = master ^ index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
