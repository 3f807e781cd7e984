//! Density matrices over a set of OAM modes.
//!
//! Hermitian d×d matrices are mapped to real vectors of length d² through an
//! orthonormal basis of Hermitian matrices: first the d diagonal units in
//! ascending ℓ order, then for each i < j (row-major) the pair
//! (E_ij + E_ji)/√2 and i(E_ij − E_ji)/√2. The map is an isometry between the
//! Hilbert-Schmidt inner product and the Euclidean one.

use std::f64::consts::SQRT_2;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::optics::BeamGeometry;

pub type CMatrix = DMatrix<Complex64>;

/// Elementwise Hermiticity tolerance for validated density matrices.
pub const HERMITIAN_TOL: f64 = 1e-12;
/// Smallest eigenvalue accepted as positive semidefinite.
pub const PSD_TOL: f64 = 1e-10;
/// Allowed deviation of the trace from one.
pub const TRACE_TOL: f64 = 1e-10;
/// Hermiticity tolerance for inputs to [`vectorize_matrix`].
pub const VECTORIZE_TOL: f64 = 1e-8;

/// Ordered set of azimuthal indices spanning the signal space.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModeBasis {
    ells: Vec<i32>,
    #[serde(default)]
    geometry: BeamGeometry,
}

impl ModeBasis {
    pub fn new(ells: Vec<i32>, geometry: BeamGeometry) -> Result<Self> {
        if ells.is_empty() {
            return Err(Error::InvalidBasis("no modes".into()));
        }
        if ells.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidBasis(format!("indices must be strictly ascending, got {ells:?}")));
        }
        Ok(Self { ells, geometry })
    }

    pub fn from_ells(ells: Vec<i32>) -> Result<Self> {
        Self::new(ells, BeamGeometry::normalized())
    }

    /// {−ℓ_max, …, ℓ_max}, d = 2ℓ_max + 1.
    pub fn symmetric(ell_max: u32) -> Self {
        let m = ell_max as i32;
        Self { ells: (-m..=m).collect(), geometry: BeamGeometry::normalized() }
    }

    /// {0, …, d − 1}.
    pub fn nonnegative(dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidBasis("dimension must be at least 1".into()));
        }
        Ok(Self { ells: (0..dim as i32).collect(), geometry: BeamGeometry::normalized() })
    }

    pub fn ells(&self) -> &[i32] {
        &self.ells
    }

    pub fn geometry(&self) -> &BeamGeometry {
        &self.geometry
    }

    pub fn dim(&self) -> usize {
        self.ells.len()
    }

    /// Number of real parameters of a Hermitian operator, d².
    pub fn real_dim(&self) -> usize {
        self.dim() * self.dim()
    }

    pub fn index_of(&self, ell: i32) -> Option<usize> {
        self.ells.binary_search(&ell).ok()
    }

    /// Same mode labels; beam geometry is not compared.
    pub fn same_modes(&self, other: &ModeBasis) -> bool {
        self.ells == other.ells
    }

    pub(crate) fn check_same(&self, other: &ModeBasis) -> Result<()> {
        if self.same_modes(other) {
            Ok(())
        } else {
            Err(Error::BasisMismatch(self.ells.clone(), other.ells.clone()))
        }
    }
}

/// Projection target used by [`project_psd`].
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TraceMode {
    /// Positive semidefinite cone only.
    #[default]
    None,
    /// PSD matrices with unit trace.
    Unit,
}

/// A Hermitian matrix over a mode basis. Not necessarily positive or normalized.
#[derive(Clone, Debug, PartialEq)]
pub struct HermitianOperator {
    basis: ModeBasis,
    entries: CMatrix,
}

impl HermitianOperator {
    /// Validates Hermiticity within [`VECTORIZE_TOL`] and stores the exactly
    /// Hermitian part.
    pub fn new(basis: ModeBasis, entries: CMatrix) -> Result<Self> {
        check_shape(&basis, &entries)?;
        let dev = hermitian_deviation(&entries);
        if dev > VECTORIZE_TOL {
            return Err(Error::NotHermitian(dev));
        }
        Ok(Self { basis, entries: hermitian_part(&entries) })
    }

    pub fn zeros(basis: ModeBasis) -> Self {
        let d = basis.dim();
        Self { basis, entries: CMatrix::zeros(d, d) }
    }

    pub(crate) fn from_hermitian_unchecked(basis: ModeBasis, entries: CMatrix) -> Self {
        Self { basis, entries }
    }

    pub fn basis(&self) -> &ModeBasis {
        &self.basis
    }

    pub fn entries(&self) -> &CMatrix {
        &self.entries
    }

    pub fn dim(&self) -> usize {
        self.basis.dim()
    }

    pub fn trace(&self) -> f64 {
        self.entries.diagonal().iter().map(|z| z.re).sum()
    }

    /// Eigenvalues in ascending order.
    pub fn eigenvalues(&self) -> Vec<f64> {
        let mut ev: Vec<f64> = SymmetricEigen::new(self.entries.clone()).eigenvalues.iter().copied().collect();
        ev.sort_by(f64::total_cmp);
        ev
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.eigenvalues()[0]
    }

    /// Divides by the trace. Returns `None` when the trace is not safely positive.
    pub fn trace_normalized(&self) -> Option<HermitianOperator> {
        let t = self.trace();
        if !t.is_finite() || t.abs() <= f64::MIN_POSITIVE * 1e10 {
            return None;
        }
        Some(Self { basis: self.basis.clone(), entries: self.entries.unscale(t) })
    }

    pub fn scaled(&self, factor: f64) -> HermitianOperator {
        Self { basis: self.basis.clone(), entries: self.entries.scale(factor) }
    }

    /// Number of eigenvalues above `tol`.
    pub fn numerical_rank(&self, tol: f64) -> usize {
        self.eigenvalues().iter().filter(|&&e| e > tol).count()
    }
}

impl AsRef<HermitianOperator> for HermitianOperator {
    fn as_ref(&self) -> &HermitianOperator {
        self
    }
}

/// Hermitian, positive semidefinite, unit-trace matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct DensityMatrix(HermitianOperator);

impl DensityMatrix {
    pub fn new(basis: ModeBasis, entries: CMatrix) -> Result<Self> {
        check_shape(&basis, &entries)?;
        let dev = hermitian_deviation(&entries);
        if dev > HERMITIAN_TOL {
            return Err(Error::NotHermitian(dev));
        }
        Self::from_operator(HermitianOperator { basis, entries: hermitian_part(&entries) })
    }

    /// Checks positivity and trace of an already Hermitian operator.
    pub fn from_operator(op: HermitianOperator) -> Result<Self> {
        let tr = op.trace();
        if (tr - 1.0).abs() > TRACE_TOL {
            return Err(Error::InvalidTrace(tr));
        }
        let min = op.min_eigenvalue();
        if min < -PSD_TOL {
            return Err(Error::NotPositive(min));
        }
        Ok(Self(op))
    }

    /// Projector onto a single mode |ℓ⟩⟨ℓ|.
    pub fn basis_state(basis: &ModeBasis, ell: i32) -> Result<Self> {
        let i = basis.index_of(ell).ok_or(Error::MissingMode(ell))?;
        let d = basis.dim();
        let mut m = CMatrix::zeros(d, d);
        m[(i, i)] = Complex64::new(1.0, 0.0);
        Ok(Self(HermitianOperator { basis: basis.clone(), entries: m }))
    }

    /// |ψ⟩⟨ψ|/⟨ψ|ψ⟩ for amplitudes given in basis order.
    pub fn pure(basis: &ModeBasis, amplitudes: &[Complex64]) -> Result<Self> {
        if amplitudes.len() != basis.dim() {
            return Err(Error::DimensionMismatch(format!(
                "{} amplitudes for a {}-dimensional basis",
                amplitudes.len(),
                basis.dim()
            )));
        }
        let v = DVector::from_column_slice(amplitudes);
        let n2 = v.norm_squared();
        if n2.is_nan() || n2 <= 0.0 {
            return Err(Error::InvalidParameter("zero state vector".into()));
        }
        let m = (&v * v.adjoint()).unscale(n2);
        Ok(Self(HermitianOperator { basis: basis.clone(), entries: hermitian_part(&m) }))
    }

    /// I/d.
    pub fn maximally_mixed(basis: &ModeBasis) -> Self {
        let d = basis.dim();
        let m = CMatrix::identity(d, d).unscale(d as f64);
        Self(HermitianOperator { basis: basis.clone(), entries: m })
    }

    pub fn basis(&self) -> &ModeBasis {
        &self.0.basis
    }

    pub fn entries(&self) -> &CMatrix {
        &self.0.entries
    }

    pub fn dim(&self) -> usize {
        self.0.dim()
    }

    pub fn operator(&self) -> &HermitianOperator {
        &self.0
    }

    pub fn into_operator(self) -> HermitianOperator {
        self.0
    }

    /// Tr ϱ².
    pub fn purity(&self) -> f64 {
        self.0.entries.iter().map(|z| z.norm_sqr()).sum()
    }
}

impl AsRef<HermitianOperator> for DensityMatrix {
    fn as_ref(&self) -> &HermitianOperator {
        &self.0
    }
}

/// Real coordinates of a Hermitian operator in the canonical Hermitian basis.
#[derive(Clone, Debug, PartialEq)]
pub struct HermitianVector {
    basis: ModeBasis,
    coords: DVector<f64>,
}

impl HermitianVector {
    pub fn new(basis: ModeBasis, coords: DVector<f64>) -> Result<Self> {
        if coords.len() != basis.real_dim() {
            return Err(Error::DimensionMismatch(format!("{} coordinates for d = {}", coords.len(), basis.dim())));
        }
        Ok(Self { basis, coords })
    }

    pub fn basis(&self) -> &ModeBasis {
        &self.basis
    }

    pub fn coords(&self) -> &DVector<f64> {
        &self.coords
    }

    pub fn into_coords(self) -> DVector<f64> {
        self.coords
    }
}

/// Coordinates of a Hermitian operator.
pub fn vectorize<H: AsRef<HermitianOperator>>(h: H) -> HermitianVector {
    let h = h.as_ref();
    HermitianVector { basis: h.basis.clone(), coords: hermitian_coords(&h.entries) }
}

/// Coordinates of a raw matrix; rejects inputs further than [`VECTORIZE_TOL`]
/// from Hermitian.
pub fn vectorize_matrix(m: &CMatrix) -> Result<DVector<f64>> {
    if !m.is_square() {
        return Err(Error::DimensionMismatch(format!("{}x{} is not square", m.nrows(), m.ncols())));
    }
    let dev = hermitian_deviation(m);
    if dev > VECTORIZE_TOL {
        return Err(Error::NotHermitian(dev));
    }
    Ok(hermitian_coords(&hermitian_part(m)))
}

/// Inverse of [`vectorize`].
pub fn matricize(v: &HermitianVector) -> HermitianOperator {
    HermitianOperator { basis: v.basis.clone(), entries: hermitian_from_coords(&v.coords, v.basis.dim()) }
}

pub(crate) fn hermitian_coords(m: &CMatrix) -> DVector<f64> {
    let d = m.nrows();
    let mut out = DVector::zeros(d * d);
    for i in 0..d {
        out[i] = m[(i, i)].re;
    }
    let mut k = d;
    for i in 0..d {
        for j in (i + 1)..d {
            // average the two triangles so that slightly non-Hermitian input
            // maps to its Hermitian part
            let z = (m[(i, j)] + m[(j, i)].conj()) * 0.5;
            out[k] = SQRT_2 * z.re;
            out[k + 1] = SQRT_2 * z.im;
            k += 2;
        }
    }
    out
}

pub(crate) fn hermitian_from_coords(v: &DVector<f64>, d: usize) -> CMatrix {
    debug_assert_eq!(v.len(), d * d);
    let mut m = CMatrix::zeros(d, d);
    for i in 0..d {
        m[(i, i)] = Complex64::new(v[i], 0.0);
    }
    let mut k = d;
    for i in 0..d {
        for j in (i + 1)..d {
            let z = Complex64::new(v[k], v[k + 1]) / SQRT_2;
            m[(i, j)] = z;
            m[(j, i)] = z.conj();
            k += 2;
        }
    }
    m
}

fn check_shape(basis: &ModeBasis, m: &CMatrix) -> Result<()> {
    let d = basis.dim();
    if m.nrows() != d || m.ncols() != d {
        return Err(Error::DimensionMismatch(format!(
            "{}x{} matrix for a {d}-dimensional basis",
            m.nrows(),
            m.ncols()
        )));
    }
    Ok(())
}

/// Largest elementwise |m − m†|.
pub fn hermitian_deviation(m: &CMatrix) -> f64 {
    let d = m.nrows();
    let mut dev: f64 = 0.0;
    for i in 0..d {
        for j in i..d {
            dev = dev.max((m[(i, j)] - m[(j, i)].conj()).norm());
        }
    }
    dev
}

fn hermitian_part(m: &CMatrix) -> CMatrix {
    (m + m.adjoint()) * Complex64::new(0.5, 0.0)
}

/// Random state of the given rank: ϱ = GG†/Tr(GG†) with G a d×r matrix of
/// independent standard complex normal entries.
pub fn random_state(basis: &ModeBasis, rank: usize, seed: u64) -> Result<DensityMatrix> {
    let d = basis.dim();
    if rank == 0 || rank > d {
        return Err(Error::RankOutOfRange { rank, dim: d });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(DensityMatrix(HermitianOperator { basis: basis.clone(), entries: ginibre(d, rank, &mut rng) }))
}

pub(crate) fn ginibre<R: rand::Rng + ?Sized>(d: usize, rank: usize, rng: &mut R) -> CMatrix {
    let g = CMatrix::from_fn(d, rank, |_, _| {
        let re: f64 = StandardNormal.sample(rng);
        let im: f64 = StandardNormal.sample(rng);
        Complex64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
    });
    let m = &g * g.adjoint();
    let tr: f64 = m.diagonal().iter().map(|z| z.re).sum();
    hermitian_part(&m.unscale(tr))
}

/// p|0⟩⟨0| + (1 − p)|Ψ⟩⟨Ψ| with |Ψ⟩ = cos θ|−3⟩ + sin θ|3⟩.
pub fn test_state(p: f64, theta: f64, basis: &ModeBasis) -> Result<DensityMatrix> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::InvalidParameter(format!("mixing weight p = {p} outside [0, 1]")));
    }
    let i0 = basis.index_of(0).ok_or(Error::MissingMode(0))?;
    let im = basis.index_of(-3).ok_or(Error::MissingMode(-3))?;
    let ip = basis.index_of(3).ok_or(Error::MissingMode(3))?;
    let d = basis.dim();
    let mut psi = DVector::<Complex64>::zeros(d);
    psi[im] = Complex64::new(theta.cos(), 0.0);
    psi[ip] = Complex64::new(theta.sin(), 0.0);
    let mut m = (&psi * psi.adjoint()).scale(1.0 - p);
    m[(i0, i0)] += Complex64::new(p, 0.0);
    Ok(DensityMatrix(HermitianOperator { basis: basis.clone(), entries: m }))
}

/// Squared Hilbert-Schmidt distance Tr[(a − b)²].
pub fn hs_error<A, B>(a: A, b: B) -> Result<f64>
where
    A: AsRef<HermitianOperator>,
    B: AsRef<HermitianOperator>,
{
    let (a, b) = (a.as_ref(), b.as_ref());
    a.basis.check_same(&b.basis)?;
    Ok(a.entries.iter().zip(b.entries.iter()).map(|(x, y)| (x - y).norm_sqr()).sum())
}

/// Hilbert-Schmidt inner product Tr(a† b), real for Hermitian arguments.
pub fn hs_inner(a: &CMatrix, b: &CMatrix) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x.conj() * y).re).sum()
}

/// Nearest PSD matrix in Hilbert-Schmidt norm (optionally with unit trace).
pub fn project_psd<H: AsRef<HermitianOperator>>(h: H, mode: TraceMode) -> HermitianOperator {
    let h = h.as_ref();
    HermitianOperator { basis: h.basis.clone(), entries: project_psd_matrix(&h.entries, mode) }
}

pub(crate) fn project_psd_matrix(m: &CMatrix, mode: TraceMode) -> CMatrix {
    let eig = SymmetricEigen::new(m.clone());
    let mut vals: Vec<f64> = eig.eigenvalues.iter().copied().collect();
    match mode {
        TraceMode::None => vals.iter_mut().for_each(|v| *v = v.max(0.0)),
        TraceMode::Unit => vals = project_simplex(&vals),
    }
    let d = m.nrows();
    let mut out = CMatrix::zeros(d, d);
    for (k, &lam) in vals.iter().enumerate() {
        if lam <= 0.0 {
            continue;
        }
        let u = eig.eigenvectors.column(k);
        out += (u * u.adjoint()).scale(lam);
    }
    hermitian_part(&out)
}

/// Euclidean projection onto {x ≥ 0, Σx = 1}.
pub fn project_simplex(v: &[f64]) -> Vec<f64> {
    let mut sorted = v.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let mut cumsum = 0.0;
    let mut shift = 0.0;
    for (i, &s) in sorted.iter().enumerate() {
        cumsum += s;
        let t = (cumsum - 1.0) / (i + 1) as f64;
        if s - t > 0.0 {
            shift = t;
        }
    }
    v.iter().map(|&x| (x - shift).max(0.0)).collect()
}

/// On-disk form of a density matrix: full row-major real and imaginary parts.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DensityMatrixJson {
    pub ells: Vec<i32>,
    pub re: Vec<Vec<f64>>,
    pub im: Vec<Vec<f64>>,
}

impl DensityMatrixJson {
    pub fn from_operator<H: AsRef<HermitianOperator>>(h: H) -> Self {
        let h = h.as_ref();
        let d = h.dim();
        let row = |f: fn(&Complex64) -> f64, i: usize| (0..d).map(|j| f(&h.entries[(i, j)])).collect();
        Self {
            ells: h.basis.ells.clone(),
            re: (0..d).map(|i| row(|z| z.re, i)).collect(),
            im: (0..d).map(|i| row(|z| z.im, i)).collect(),
        }
    }

    fn matrix(&self) -> Result<(ModeBasis, CMatrix)> {
        let basis = ModeBasis::from_ells(self.ells.clone())?;
        let d = basis.dim();
        let ok = |rows: &Vec<Vec<f64>>| rows.len() == d && rows.iter().all(|r| r.len() == d);
        if !ok(&self.re) || !ok(&self.im) {
            return Err(Error::Format(format!("\"re\" and \"im\" must both be {d}x{d}")));
        }
        let m = CMatrix::from_fn(d, d, |i, j| Complex64::new(self.re[i][j], self.im[i][j]));
        Ok((basis, m))
    }

    /// Hermitian operator without positivity or trace checks.
    pub fn to_operator(&self) -> Result<HermitianOperator> {
        let (basis, m) = self.matrix()?;
        HermitianOperator::new(basis, m)
    }

    /// Fully validated density matrix; the error names the violated invariant.
    pub fn to_density(&self) -> Result<DensityMatrix> {
        let (basis, m) = self.matrix()?;
        DensityMatrix::new(basis, m)
    }
}
