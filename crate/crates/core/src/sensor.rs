//! Intensity-scan measurement model.
//!
//! A scan samples p(𝔯, φ, ζ) = w(z)²⟨r, φ, z|ϱ|r, φ, z⟩ on a square pixel grid
//! laid out in normalized transverse coordinates 𝔯 = r/w(z), at a list of
//! planes ζ = z/z_R. Because the grid scales with the beam, one grid serves
//! every plane. The continuum integral of p over the normalized plane is Tr ϱ.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector, SVD};
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::optics::{gouy_phase, BeamGeometry, ModeIndex};
use crate::qstate::{vectorize, DensityMatrix, HermitianOperator, ModeBasis};

/// Default pixels per side of the camera grid.
pub const DEFAULT_PIXELS: usize = 19;
/// Default half-width of the grid in units of the beam radius.
pub const DEFAULT_EXTENT: f64 = 3.0;
/// Default plane positions z/z_R; a scan with Z planes uses the first Z.
pub const DEFAULT_PLANES: [f64; 10] = [0.0, 1.0 / 3.0, 0.5, 1.0, 1.5, 2.0, 2.5, 3.0, 4.0, 5.0];
/// Default relative singular-value threshold for numerical rank.
pub const DEFAULT_RANK_TOL: f64 = 1e-8;

/// Pixel grid and the planes at which it is recorded.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScanGeometry {
    n_pixels_per_side: usize,
    extent: f64,
    planes: Vec<f64>,
}

impl ScanGeometry {
    pub fn new(n_pixels_per_side: usize, extent: f64, planes: Vec<f64>) -> Result<Self> {
        if n_pixels_per_side == 0 {
            return Err(Error::InvalidScanGeometry("need at least one pixel per side".into()));
        }
        if !(extent > 0.0 && extent.is_finite()) {
            return Err(Error::InvalidScanGeometry(format!("extent must be positive, got {extent}")));
        }
        if planes.is_empty() {
            return Err(Error::InvalidScanGeometry("no planes".into()));
        }
        if planes.iter().any(|z| !z.is_finite()) {
            return Err(Error::InvalidScanGeometry("non-finite plane position".into()));
        }
        for (i, a) in planes.iter().enumerate() {
            if planes[..i].contains(a) {
                return Err(Error::InvalidScanGeometry(format!("plane {a} listed twice")));
            }
        }
        Ok(Self { n_pixels_per_side, extent, planes })
    }

    /// Default grid with the first `z` default planes.
    pub fn with_planes(z: usize) -> Result<Self> {
        if z == 0 || z > DEFAULT_PLANES.len() {
            return Err(Error::InvalidScanGeometry(format!(
                "number of default planes must be in 1..={}, got {z}",
                DEFAULT_PLANES.len()
            )));
        }
        Self::new(DEFAULT_PIXELS, DEFAULT_EXTENT, DEFAULT_PLANES[..z].to_vec())
    }

    pub fn n_pixels_per_side(&self) -> usize {
        self.n_pixels_per_side
    }

    pub fn extent(&self) -> f64 {
        self.extent
    }

    pub fn planes(&self) -> &[f64] {
        &self.planes
    }

    pub fn pixels_per_plane(&self) -> usize {
        self.n_pixels_per_side * self.n_pixels_per_side
    }

    pub fn len(&self) -> usize {
        self.pixels_per_plane() * self.planes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Pixel pitch Δ = 2·extent/n.
    pub fn pitch(&self) -> f64 {
        2.0 * self.extent / self.n_pixels_per_side as f64
    }

    pub fn pixel_area(&self) -> f64 {
        self.pitch().powi(2)
    }

    /// Center coordinate of pixel index `i` along either axis.
    pub fn pixel_center(&self, i: usize) -> f64 {
        -self.extent + (i as f64 + 0.5) * self.pitch()
    }

    /// Sample point of row `index` in plane-major, row-major (py, then px) order.
    pub fn sample_point(&self, index: usize) -> ScanPoint {
        let n = self.n_pixels_per_side;
        let plane = index / (n * n);
        let pix = index % (n * n);
        let (py, px) = (pix / n, pix % n);
        ScanPoint::cartesian(self.pixel_center(px), self.pixel_center(py), self.planes[plane])
    }

    /// Same geometry with one more plane appended.
    pub fn with_extra_plane(&self, zeta: f64) -> Result<Self> {
        let mut planes = self.planes.clone();
        planes.push(zeta);
        Self::new(self.n_pixels_per_side, self.extent, planes)
    }
}

/// A point in normalized coordinates: 𝔯 = r/w(z), azimuth φ, ζ = z/z_R.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ScanPoint {
    pub rho: f64,
    pub phi: f64,
    pub zeta: f64,
}

impl ScanPoint {
    pub fn new(rho: f64, phi: f64, zeta: f64) -> Result<Self> {
        if rho < 0.0 || rho.is_nan() {
            return Err(Error::NegativeRadius(rho));
        }
        Ok(Self { rho, phi, zeta })
    }

    pub fn cartesian(x: f64, y: f64, zeta: f64) -> Self {
        Self { rho: x.hypot(y), phi: y.atan2(x), zeta }
    }
}

/// C_ℓℓ' = 𝔯^{|ℓ|+|ℓ'|} e^{i(ℓ−ℓ')φ} e^{i[ψ_ℓ(ζ) − ψ_ℓ'(ζ)]}.
pub fn coefficient(ell: i32, ell2: i32, point: &ScanPoint) -> Complex64 {
    let g = BeamGeometry::normalized();
    let radial = point.rho.powi((ell.unsigned_abs() + ell2.unsigned_abs()) as i32);
    let phase = (ell - ell2) as f64 * point.phi + gouy_phase(ModeIndex::new(ell), &g, point.zeta)
        - gouy_phase(ModeIndex::new(ell2), &g, point.zeta);
    Complex64::from_polar(radial, phase)
}

/// N_ℓ = sqrt(2^{|ℓ|+1} / (π |ℓ|!)), the p = 0 mode normalization in 𝔯 units.
pub fn mode_weight(ell: i32) -> f64 {
    let l = ell.unsigned_abs();
    let fact: f64 = (1..=l).map(f64::from).product();
    (2f64.powi(l as i32 + 1) / (PI * fact)).sqrt()
}

/// w(z)·LG_0ℓ at a normalized point: N_ℓ 𝔯^{|ℓ|} e^{−𝔯²} e^{−i(ℓφ + ψ_ℓ)},
/// curvature phase omitted since it is common to all modes.
fn scaled_amplitudes(ells: &[i32], point: &ScanPoint) -> Vec<Complex64> {
    let g = BeamGeometry::normalized();
    let gauss = (-point.rho * point.rho).exp();
    ells.iter()
        .map(|&l| {
            let mag = mode_weight(l) * point.rho.powi(l.unsigned_abs() as i32) * gauss;
            let phase = -(l as f64) * point.phi - gouy_phase(ModeIndex::new(l), &g, point.zeta);
            Complex64::from_polar(mag, phase)
        })
        .collect()
}

/// Σ_ℓℓ' ϱ_ℓℓ' N_ℓ N_ℓ' e^{−2𝔯²} C̄_ℓℓ' before discarding the imaginary part.
///
/// The conjugate of C pairs with ϱ_ℓℓ' under the e^{−iℓφ} mode convention,
/// so that a pure state gives |Σ c_ℓ LG_0ℓ|² w².
pub fn pixel_value_complex<H: AsRef<HermitianOperator>>(rho: H, point: &ScanPoint) -> Complex64 {
    let rho = rho.as_ref();
    let ells = rho.basis().ells();
    let env = (-2.0 * point.rho * point.rho).exp();
    let m = rho.entries();
    let mut acc = Complex64::new(0.0, 0.0);
    for (a, &la) in ells.iter().enumerate() {
        for (b, &lb) in ells.iter().enumerate() {
            acc += m[(a, b)] * coefficient(la, lb, point).conj() * (mode_weight(la) * mode_weight(lb));
        }
    }
    acc * env
}

/// Probability density p(𝔯, φ, ζ) of a state at a normalized point.
pub fn pixel_probability<H: AsRef<HermitianOperator>>(rho: H, point: &ScanPoint) -> f64 {
    pixel_value_complex(rho, point).re
}

/// Linear map from Hermitian coordinates to stacked pixel readings.
#[derive(Clone, Debug, PartialEq)]
pub struct MeasurementMap {
    basis: ModeBasis,
    geometry: ScanGeometry,
    matrix: DMatrix<f64>,
}

impl MeasurementMap {
    pub fn from_parts(basis: ModeBasis, geometry: ScanGeometry, matrix: DMatrix<f64>) -> Result<Self> {
        if matrix.nrows() != geometry.len() || matrix.ncols() != basis.real_dim() {
            return Err(Error::DimensionMismatch(format!(
                "matrix is {}x{}, expected {}x{}",
                matrix.nrows(),
                matrix.ncols(),
                geometry.len(),
                basis.real_dim()
            )));
        }
        Ok(Self { basis, geometry, matrix })
    }

    pub fn basis(&self) -> &ModeBasis {
        &self.basis
    }

    pub fn geometry(&self) -> &ScanGeometry {
        &self.geometry
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn nrows(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.matrix.ncols()
    }

    /// A·vec(h).
    pub fn apply<H: AsRef<HermitianOperator>>(&self, h: H) -> Result<DVector<f64>> {
        let h = h.as_ref();
        self.basis.check_same(h.basis())?;
        Ok(&self.matrix * vectorize(h).coords())
    }

    /// Singular values in descending order.
    pub fn singular_values(&self) -> Vec<f64> {
        singular_values(&self.matrix)
    }
}

/// Builds A row by row: row (plane j, pixel (px, py)) is the pixel
/// probability functional at the pixel center times the pixel area.
pub fn build_measurement_map(basis: &ModeBasis, geometry: &ScanGeometry) -> MeasurementMap {
    let d = basis.dim();
    let ncols = d * d;
    let area = geometry.pixel_area();
    let ells = basis.ells();
    let mut data = vec![0.0; geometry.len() * ncols];
    data.par_chunks_mut(ncols).enumerate().for_each(|(row, out)| {
        let f = scaled_amplitudes(ells, &geometry.sample_point(row));
        // K_ab = f_a conj(f_b) is the coefficient of ϱ_ab
        for a in 0..d {
            out[a] = f[a].norm_sqr() * area;
        }
        let mut k = d;
        for a in 0..d {
            for b in (a + 1)..d {
                let kab = f[a] * f[b].conj() * area;
                out[k] = std::f64::consts::SQRT_2 * kab.re;
                out[k + 1] = -std::f64::consts::SQRT_2 * kab.im;
                k += 2;
            }
        }
    });
    MeasurementMap {
        basis: basis.clone(),
        geometry: geometry.clone(),
        matrix: DMatrix::from_row_slice(geometry.len(), ncols, &data),
    }
}

pub(crate) fn singular_values(m: &DMatrix<f64>) -> Vec<f64> {
    let mut s: Vec<f64> = SVD::new(m.clone(), false, false).singular_values.iter().copied().collect();
    s.sort_by(|a, b| b.total_cmp(a));
    s
}

/// Number of singular values of A above `tol`·σ_max.
pub fn independent_detections(map: &MeasurementMap, tol: f64) -> Result<usize> {
    if map.nrows() == 0 || map.ncols() == 0 {
        return Err(Error::EmptyMap);
    }
    if !(tol > 0.0 && tol < 1.0) {
        return Err(Error::InvalidParameter(format!("rank tolerance must be in (0, 1), got {tol}")));
    }
    Ok(numerical_rank(&map.singular_values(), tol))
}

pub(crate) fn numerical_rank(sorted_desc: &[f64], tol: f64) -> usize {
    match sorted_desc.first() {
        Some(&smax) if smax > 0.0 => sorted_desc.iter().filter(|&&s| s > tol * smax).count(),
        _ => 0,
    }
}

/// n_Z for Z = 1..=z_max using the default plane list on the given grid.
pub fn rank_profile(basis: &ModeBasis, pixels: usize, extent: f64, z_max: usize, tol: f64) -> Result<Vec<usize>> {
    if z_max == 0 || z_max > DEFAULT_PLANES.len() {
        return Err(Error::InvalidParameter(format!("z_max must be in 1..={}, got {z_max}", DEFAULT_PLANES.len())));
    }
    (1..=z_max)
        .map(|z| {
            let geom = ScanGeometry::new(pixels, extent, DEFAULT_PLANES[..z].to_vec())?;
            independent_detections(&build_measurement_map(basis, &geom), tol)
        })
        .collect()
}

/// Noise applied when simulating a scan.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Noise {
    #[default]
    None,
    /// Independent Poisson counts with expected total `total_counts`.
    Poisson { total_counts: f64 },
}

/// Stacked pixel readings, plane-major then row-major within a plane.
#[derive(Clone, Debug, PartialEq)]
pub struct IntensityScan {
    geometry: ScanGeometry,
    values: DVector<f64>,
    photon_budget: Option<f64>,
}

impl IntensityScan {
    pub fn new(geometry: ScanGeometry, values: DVector<f64>, photon_budget: Option<f64>) -> Result<Self> {
        if values.len() != geometry.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} values for a geometry with {} pixels",
                values.len(),
                geometry.len()
            )));
        }
        if let Some(bad) = values.iter().find(|v| !v.is_finite() || **v < 0.0) {
            return Err(Error::InvalidParameter(format!("scan value {bad} is negative or not finite")));
        }
        Ok(Self { geometry, values, photon_budget })
    }

    pub fn geometry(&self) -> &ScanGeometry {
        &self.geometry
    }

    pub fn values(&self) -> &DVector<f64> {
        &self.values
    }

    pub fn photon_budget(&self) -> Option<f64> {
        self.photon_budget
    }

    pub fn total(&self) -> f64 {
        self.values.sum()
    }

    /// Values of a single plane.
    pub fn plane(&self, j: usize) -> &[f64] {
        let n = self.geometry.pixels_per_plane();
        &self.values.as_slice()[j * n..(j + 1) * n]
    }
}

/// Simulated scan of `rho` through `map`. Poisson noise rescales counts back
/// to the probability scale; the result is deterministic per seed.
pub fn simulate_scan(rho: &DensityMatrix, map: &MeasurementMap, noise: Noise, seed: u64) -> Result<IntensityScan> {
    // clamp rounding-level negatives
    let clean = map.apply(rho)?.map(|v| v.max(0.0));
    match noise {
        Noise::None => IntensityScan::new(map.geometry.clone(), clean, None),
        Noise::Poisson { total_counts } => {
            if !(total_counts > 0.0 && total_counts.is_finite()) {
                return Err(Error::InvalidParameter(format!("photon budget must be positive, got {total_counts}")));
            }
            let total = clean.sum();
            if total.is_nan() || total <= 0.0 {
                return IntensityScan::new(map.geometry.clone(), clean, Some(total_counts));
            }
            let scale = total_counts / total;
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut noisy = DVector::zeros(clean.len());
            for (out, &v) in noisy.iter_mut().zip(clean.iter()) {
                let mean = v * scale;
                let count = if mean > 0.0 {
                    Poisson::new(mean).map_err(|e| Error::InvalidParameter(e.to_string()))?.sample(&mut rng)
                } else {
                    0.0
                };
                *out = count / scale;
            }
            IntensityScan::new(map.geometry.clone(), noisy, Some(total_counts))
        }
    }
}
