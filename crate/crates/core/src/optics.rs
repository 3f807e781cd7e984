//! Laguerre-Gauss modes and the Gaussian beam parameters they depend on.
//!
//! Everything here is a pure function. Kernels elsewhere in the crate work in
//! normalized units (w0 = 1, z measured in Rayleigh ranges); [`BeamGeometry`]
//! keeps physical fields so that callers can work in lab units if they wish.

use std::f64::consts::{PI, TAU};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Waist radius and wave number of a Gaussian beam with its waist at z = 0.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawGeometry")]
pub struct BeamGeometry {
    w0: f64,
    k: f64,
}

#[derive(Deserialize)]
struct RawGeometry {
    w0: f64,
    k: f64,
}

impl TryFrom<RawGeometry> for BeamGeometry {
    type Error = Error;
    fn try_from(raw: RawGeometry) -> Result<Self> {
        BeamGeometry::new(raw.w0, raw.k)
    }
}

impl BeamGeometry {
    pub fn new(w0: f64, k: f64) -> Result<Self> {
        if !(w0 > 0.0 && w0.is_finite()) {
            return Err(Error::InvalidGeometry(format!("w0 must be positive, got {w0}")));
        }
        if !(k > 0.0 && k.is_finite()) {
            return Err(Error::InvalidGeometry(format!("k must be positive, got {k}")));
        }
        Ok(Self { w0, k })
    }

    /// Normalized geometry: unit waist and unit Rayleigh range.
    pub fn normalized() -> Self {
        Self { w0: 1.0, k: 2.0 }
    }

    pub fn waist(&self) -> f64 {
        self.w0
    }

    pub fn wave_number(&self) -> f64 {
        self.k
    }

    /// z_R = k w0² / 2, always recomputed from the stored fields.
    pub fn rayleigh_range(&self) -> f64 {
        0.5 * self.k * self.w0 * self.w0
    }
}

impl Default for BeamGeometry {
    fn default() -> Self {
        Self::normalized()
    }
}

/// Azimuthal (topological charge) and radial indices of an LG mode.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ModeIndex {
    pub ell: i32,
    pub p: u32,
}

impl ModeIndex {
    /// Mode with radial index zero.
    pub fn new(ell: i32) -> Self {
        Self { ell, p: 0 }
    }

    pub fn with_radial(ell: i32, p: u32) -> Self {
        Self { ell, p }
    }

    pub fn abs_ell(&self) -> u32 {
        self.ell.unsigned_abs()
    }
}

/// Cylindrical coordinates (r, φ, z) with φ wrapped into [0, 2π).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TransversePoint {
    r: f64,
    phi: f64,
    z: f64,
}

impl TransversePoint {
    pub fn new(r: f64, phi: f64, z: f64) -> Result<Self> {
        if r < 0.0 || r.is_nan() {
            return Err(Error::NegativeRadius(r));
        }
        let mut phi = phi.rem_euclid(TAU);
        // rem_euclid can round up to exactly 2π for tiny negative inputs
        if phi >= TAU {
            phi = 0.0;
        }
        Ok(Self { r, phi, z })
    }

    pub fn r(&self) -> f64 {
        self.r
    }

    pub fn phi(&self) -> f64 {
        self.phi
    }

    pub fn z(&self) -> f64 {
        self.z
    }
}

/// Beam radius w(z) = w0 sqrt(1 + (z/z_R)²).
pub fn beam_radius(g: &BeamGeometry, z: f64) -> f64 {
    let zeta = z / g.rayleigh_range();
    g.w0 * (1.0 + zeta * zeta).sqrt()
}

/// Gouy phase ψ = (2p + |ℓ| + 1) arctan(z/z_R).
pub fn gouy_phase(m: ModeIndex, g: &BeamGeometry, z: f64) -> f64 {
    let order = 2.0 * m.p as f64 + m.abs_ell() as f64 + 1.0;
    order * (z / g.rayleigh_range()).atan()
}

/// Reciprocal wavefront curvature 1/R(z); zero at the waist.
///
/// 1/R = z / (z² + z_R²), which is R(z) = z[1 + (z_R/z)²] inverted without the
/// singularity at z = 0.
pub fn wavefront_curvature(g: &BeamGeometry, z: f64) -> f64 {
    let zr = g.rayleigh_range();
    z / (z * z + zr * zr)
}

/// Generalized Laguerre polynomial L_n^α(x) by the ascending three-term recurrence.
pub fn laguerre(n: u32, alpha: f64, x: f64) -> f64 {
    if n == 0 {
        return 1.0;
    }
    let mut prev = 1.0;
    let mut cur = 1.0 + alpha - x;
    for k in 1..n {
        let kf = k as f64;
        let next = ((2.0 * kf + 1.0 + alpha - x) * cur - (kf + alpha) * prev) / (kf + 1.0);
        prev = cur;
        cur = next;
    }
    cur
}

fn factorial(n: u32) -> f64 {
    (1..=n).map(f64::from).product()
}

/// sqrt(2 p! / (π (p + |ℓ|)!)).
pub fn mode_normalization(m: ModeIndex) -> f64 {
    (2.0 * factorial(m.p) / (PI * factorial(m.p + m.abs_ell()))).sqrt()
}

/// Complex amplitude LG_pℓ(r, φ, z) including curvature, azimuthal and Gouy phases.
pub fn lg_amplitude(m: ModeIndex, g: &BeamGeometry, pt: &TransversePoint) -> Complex64 {
    let w = beam_radius(g, pt.z);
    let rho = pt.r / w;
    let l = m.abs_ell();
    let envelope = mode_normalization(m) / w
        * (2f64.sqrt() * rho).powi(l as i32)
        * laguerre(m.p, l as f64, 2.0 * rho * rho)
        * (-rho * rho).exp();
    let phase = pt.r * pt.r * g.k * 0.5 * wavefront_curvature(g, pt.z) - m.ell as f64 * pt.phi - gouy_phase(m, g, pt.z);
    Complex64::from_polar(envelope, phase)
}
