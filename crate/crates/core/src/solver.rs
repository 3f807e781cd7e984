//! Reconstruction of density matrices from intensity scans.
//!
//! The positive estimator minimizes ‖A·vec(ϱ) − p‖₂ over the PSD cone by
//! accelerated projected gradient. The baseline applies the Moore-Penrose
//! pseudoinverse with no positivity. Both work in the real Hermitian
//! coordinates of [`crate::qstate`].
//!
//! A is compressed once by a thin QR factorization, A = QR, so that
//! ‖Ax − p‖² = ‖Rx − Qᵀp‖² + ‖(I − QQᵀ)p‖² and every iteration costs
//! O(d⁴) regardless of the number of pixels.

use nalgebra::{DMatrix, DVector, SVD};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::derive_seed;
use crate::error::{Error, Result};
use crate::qstate::{
    ginibre, hermitian_coords, hermitian_from_coords, project_psd_matrix, DensityMatrix, HermitianOperator, ModeBasis,
    TraceMode,
};
use crate::sensor::{numerical_rank, IntensityScan, MeasurementMap, DEFAULT_RANK_TOL};

/// Consecutive low-progress iterations required to declare stagnation.
const STALL_WINDOW: usize = 10;
/// Residual ‖Rx − Qᵀp‖ below this fraction of ‖Qᵀp‖ counts as an exact fit.
const EXACT_FIT_RTOL: f64 = 1e-12;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StepRule {
    /// Step 1/L with L = σ_max(A)².
    #[default]
    Fixed,
    /// Start from a fraction of L and double until sufficient decrease holds.
    Backtracking,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Estimator {
    Positive,
    Pseudoinverse,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    pub max_iterations: usize,
    pub rel_tolerance: f64,
    pub step_rule: StepRule,
    pub acceleration: bool,
    pub trace_mode: TraceMode,
    pub multistart: usize,
    pub seed: u64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            max_iterations: 20_000,
            rel_tolerance: 1e-10,
            step_rule: StepRule::Fixed,
            acceleration: true,
            trace_mode: TraceMode::None,
            multistart: 20,
            seed: 0,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_iterations == 0 {
            return Err(Error::InvalidParameter("max_iterations must be at least 1".into()));
        }
        if self.rel_tolerance.is_nan() || self.rel_tolerance <= 0.0 {
            return Err(Error::InvalidParameter("rel_tolerance must be positive".into()));
        }
        if self.multistart == 0 {
            return Err(Error::InvalidParameter("multistart must be at least 1".into()));
        }
        Ok(())
    }
}

/// Outcome of one reconstruction.
#[derive(Clone, Debug, PartialEq)]
pub struct ReconstructionReport {
    pub estimator: Estimator,
    /// Trace-normalized estimate, or the raw one when its trace vanishes.
    pub estimate: HermitianOperator,
    /// Solution of the optimization before trace normalization.
    pub raw_estimate: HermitianOperator,
    pub raw_trace: f64,
    /// Set when the raw trace is zero and normalization was skipped.
    pub degenerate_trace: bool,
    /// ‖A·vec(ϱ_k) − p‖₂ per iterate, starting with the initial point.
    pub objective_history: Vec<f64>,
    pub iterations_used: usize,
    pub converged: bool,
    pub uniqueness_entropy: Option<f64>,
}

impl ReconstructionReport {
    fn new(
        estimator: Estimator,
        raw: HermitianOperator,
        objective_history: Vec<f64>,
        iterations_used: usize,
        converged: bool,
    ) -> Self {
        let raw_trace = raw.trace();
        let (estimate, degenerate_trace) = match raw.trace_normalized() {
            Some(n) => (n, false),
            None => (raw.clone(), true),
        };
        Self {
            estimator,
            estimate,
            raw_estimate: raw,
            raw_trace,
            degenerate_trace,
            objective_history,
            iterations_used,
            converged,
            uniqueness_entropy: None,
        }
    }

    /// The estimate as a validated density matrix.
    pub fn density(&self) -> Result<DensityMatrix> {
        DensityMatrix::from_operator(self.estimate.clone())
    }

    pub fn final_objective(&self) -> f64 {
        *self.objective_history.last().unwrap_or(&f64::NAN)
    }
}

/// Factorization of a measurement map reused across scans.
#[derive(Debug)]
pub struct Reconstructor<'a> {
    map: &'a MeasurementMap,
    /// Orthonormal columns spanning range(A); `None` when A was zero-padded.
    q: Option<DMatrix<f64>>,
    /// Square n×n factor with ‖Ax − p‖² = ‖Rx − c‖² + const.
    r: DMatrix<f64>,
    /// R = U Σ Vᵀ.
    u: DMatrix<f64>,
    sigma: DVector<f64>,
    v_t: DMatrix<f64>,
    rank: usize,
    lipschitz: f64,
}

impl<'a> Reconstructor<'a> {
    pub fn new(map: &'a MeasurementMap) -> Result<Self> {
        Self::with_rank_tol(map, DEFAULT_RANK_TOL)
    }

    /// `rank_tol` sets the relative singular-value cutoff of the pseudoinverse.
    pub fn with_rank_tol(map: &'a MeasurementMap, rank_tol: f64) -> Result<Self> {
        let (m, n) = (map.nrows(), map.ncols());
        if m == 0 || n == 0 {
            return Err(Error::EmptyMap);
        }
        let a = map.matrix();
        let (q, r) = if m >= n {
            let qr = a.clone().qr();
            (Some(qr.q()), qr.r())
        } else {
            let mut padded = DMatrix::zeros(n, n);
            padded.rows_mut(0, m).copy_from(a);
            (None, padded)
        };
        let svd = SVD::new(r.clone(), true, true);
        let (u, sigma, v_t) = sorted_svd(svd);
        let smax = sigma.max();
        if smax.is_nan() || smax <= 0.0 {
            return Err(Error::InvalidParameter("measurement map is identically zero".into()));
        }
        let rank = numerical_rank(sigma.as_slice(), rank_tol);
        Ok(Self { map, q, r, u, sigma, v_t, rank, lipschitz: smax * smax })
    }

    pub fn map(&self) -> &MeasurementMap {
        self.map
    }

    pub fn basis(&self) -> &ModeBasis {
        self.map.basis()
    }

    /// Numerical rank of A used by the pseudoinverse.
    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn lipschitz(&self) -> f64 {
        self.lipschitz
    }

    /// Least-squares problem for one scan.
    pub fn problem(&self, scan: &IntensityScan) -> Result<Problem<'_>> {
        if scan.geometry() != self.map.geometry() {
            return Err(Error::DimensionMismatch("scan geometry differs from the map geometry".into()));
        }
        let p = scan.values();
        if p.len() != self.map.nrows() {
            return Err(Error::DimensionMismatch(format!(
                "scan has {} values, map has {} rows",
                p.len(),
                self.map.nrows()
            )));
        }
        let n = self.map.ncols();
        let (c, offset) = match &self.q {
            Some(q) => {
                let c = q.tr_mul(p);
                let outside = (p - q * &c).norm_squared();
                (c, outside)
            }
            None => {
                let mut c = DVector::zeros(n);
                c.rows_mut(0, p.len()).copy_from(p);
                (c, 0.0)
            }
        };
        Ok(Problem { rec: self, c, offset })
    }

    /// Positivity-constrained estimate starting from the zero matrix.
    pub fn positive(&self, scan: &IntensityScan, cfg: &SolverConfig) -> Result<ReconstructionReport> {
        self.positive_from(scan, cfg, None)
    }

    /// Positivity-constrained estimate from an optional starting point.
    pub fn positive_from(
        &self,
        scan: &IntensityScan,
        cfg: &SolverConfig,
        init: Option<&HermitianOperator>,
    ) -> Result<ReconstructionReport> {
        cfg.validate()?;
        let x0 = match init {
            Some(h) => {
                self.basis().check_same(h.basis())?;
                hermitian_coords(h.entries())
            }
            None => DVector::zeros(self.map.ncols()),
        };
        let prob = self.problem(scan)?;
        let (x, history, iters, converged) = prob.projected_gradient(x0, cfg);
        Ok(ReconstructionReport::new(Estimator::Positive, self.operator(&x), history, iters, converged))
    }

    /// Minimum-norm least-squares estimate A⁺p, not projected.
    pub fn pseudoinverse(&self, scan: &IntensityScan) -> Result<ReconstructionReport> {
        let prob = self.problem(scan)?;
        let x = self.pinv_apply(&prob.c);
        let res = prob.residual_norm(&x);
        Ok(ReconstructionReport::new(Estimator::Pseudoinverse, self.operator(&x), vec![res], 0, true))
    }

    fn pinv_apply(&self, c: &DVector<f64>) -> DVector<f64> {
        let k = self.rank;
        let mut w = self.u.columns(0, k).tr_mul(c);
        for i in 0..k {
            w[i] /= self.sigma[i];
        }
        self.v_t.rows(0, k).tr_mul(&w)
    }

    /// Orthonormal basis of the null space of A, one vector per column.
    pub fn null_space(&self) -> DMatrix<f64> {
        let n = self.map.ncols();
        self.v_t.rows(self.rank, n - self.rank).transpose()
    }

    fn operator(&self, x: &DVector<f64>) -> HermitianOperator {
        HermitianOperator::from_hermitian_unchecked(self.basis().clone(), hermitian_from_coords(x, self.basis().dim()))
    }

    /// Singular-value entropy of `cfg.multistart` estimates of the same scan.
    ///
    /// Positive branch: independent runs from random full-rank states.
    /// Baseline: A⁺p plus random null-space components of size ‖A⁺p‖/10.
    pub fn uniqueness_entropy(&self, scan: &IntensityScan, cfg: &SolverConfig, estimator: Estimator) -> Result<f64> {
        cfg.validate()?;
        if cfg.multistart < 2 {
            return Err(Error::InvalidParameter(format!(
                "uniqueness entropy needs at least 2 starts, got {}",
                cfg.multistart
            )));
        }
        let d = self.basis().dim();
        let columns: Vec<DVector<f64>> = match estimator {
            Estimator::Positive => (0..cfg.multistart)
                .into_par_iter()
                .map(|s| {
                    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, s as u64));
                    let init =
                        HermitianOperator::from_hermitian_unchecked(self.basis().clone(), ginibre(d, d, &mut rng));
                    let rep = self.positive_from(scan, cfg, Some(&init))?;
                    Ok(hermitian_coords(rep.estimate.entries()))
                })
                .collect::<Result<_>>()?,
            Estimator::Pseudoinverse => {
                let prob = self.problem(scan)?;
                let x0 = self.pinv_apply(&prob.c);
                let null = self.null_space();
                let scale = x0.norm() / 10.0;
                (0..cfg.multistart)
                    .map(|s| {
                        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, s as u64));
                        let g = DVector::from_fn(null.ncols(), |_, _| StandardNormal.sample(&mut rng));
                        let x = &x0 + (&null * g) * scale;
                        let op = self.operator(&x);
                        let op = op.trace_normalized().unwrap_or(op);
                        hermitian_coords(op.entries())
                    })
                    .collect()
            }
        };
        Ok(singular_value_entropy(&columns))
    }
}

/// Least-squares objective ½‖A·x − p‖² in compressed form.
#[derive(Debug)]
pub struct Problem<'r> {
    rec: &'r Reconstructor<'r>,
    c: DVector<f64>,
    offset: f64,
}

impl Problem<'_> {
    fn residual(&self, x: &DVector<f64>) -> DVector<f64> {
        &self.rec.r * x - &self.c
    }

    /// ½‖A·x − p‖².
    pub fn objective(&self, x: &DVector<f64>) -> f64 {
        0.5 * (self.residual(x).norm_squared() + self.offset)
    }

    /// Aᵀ(A·x − p).
    pub fn gradient(&self, x: &DVector<f64>) -> DVector<f64> {
        self.rec.r.tr_mul(&self.residual(x))
    }

    /// ‖A·x − p‖.
    pub fn residual_norm(&self, x: &DVector<f64>) -> f64 {
        (self.residual(x).norm_squared() + self.offset).sqrt()
    }

    fn project(&self, x: &DVector<f64>, mode: TraceMode) -> DVector<f64> {
        let d = self.rec.basis().dim();
        hermitian_coords(&project_psd_matrix(&hermitian_from_coords(x, d), mode))
    }

    /// Returns (solution, residual-norm history, iterations, converged).
    fn projected_gradient(&self, x0: DVector<f64>, cfg: &SolverConfig) -> (DVector<f64>, Vec<f64>, usize, bool) {
        let mode = cfg.trace_mode;
        let c_norm = self.c.norm();
        let exact = |r: &DVector<f64>| r.norm() <= EXACT_FIT_RTOL * c_norm;

        let mut x = self.project(&x0, mode);
        let mut rx = self.residual(&x);
        let mut fx = 0.5 * (rx.norm_squared() + self.offset);
        let mut history = vec![(2.0 * fx).sqrt()];
        if exact(&rx) {
            return (x, history, 0, true);
        }

        let mut lip = match cfg.step_rule {
            StepRule::Fixed => self.rec.lipschitz,
            StepRule::Backtracking => self.rec.lipschitz / 64.0,
        };
        let mut y = x.clone();
        let mut ry = rx.clone();
        let mut t = 1.0_f64;
        let mut stall = 0;

        for k in 1..=cfg.max_iterations {
            let (mut xn, mut rn) = self.step(&y, &ry, &mut lip, cfg.step_rule, mode);
            let mut fn_ = 0.5 * (rn.norm_squared() + self.offset);
            if cfg.acceleration && fn_ > fx {
                // momentum overshoot: restart with a plain step from x
                t = 1.0;
                y = x.clone();
                ry = rx.clone();
                let (a, b) = self.step(&y, &ry, &mut lip, cfg.step_rule, mode);
                xn = a;
                rn = b;
                fn_ = 0.5 * (rn.norm_squared() + self.offset);
            }
            let moved = (&xn - &y).norm();
            history.push((2.0 * fn_).sqrt());

            let decrease = fx - fn_;
            if decrease >= 0.0 && decrease < cfg.rel_tolerance * fx {
                stall += 1;
            } else {
                stall = 0;
            }
            let kkt = moved <= cfg.rel_tolerance * xn.norm().max(f64::MIN_POSITIVE);
            let done = exact(&rn) || stall >= STALL_WINDOW || kkt;

            if cfg.acceleration {
                let tn = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
                let beta = (t - 1.0) / tn;
                y = &xn + (&xn - &x) * beta;
                ry = &rn + (&rn - &rx) * beta;
                t = tn;
            } else {
                y = xn.clone();
                ry = rn.clone();
            }
            x = xn;
            rx = rn;
            fx = fn_;
            if done {
                return (x, history, k, true);
            }
        }
        (x, history, cfg.max_iterations, false)
    }

    /// One projected gradient step from y, whose residual is ry.
    fn step(
        &self,
        y: &DVector<f64>,
        ry: &DVector<f64>,
        lip: &mut f64,
        rule: StepRule,
        mode: TraceMode,
    ) -> (DVector<f64>, DVector<f64>) {
        let grad = self.rec.r.tr_mul(ry);
        loop {
            let xn = self.project(&(y - &grad / *lip), mode);
            let rn = self.residual(&xn);
            if rule == StepRule::Fixed || *lip >= self.rec.lipschitz {
                return (xn, rn);
            }
            let dx = &xn - y;
            let model = ry.norm_squared() + 2.0 * grad.dot(&dx) + *lip * dx.norm_squared();
            if rn.norm_squared() <= model * (1.0 + 1e-12) {
                return (xn, rn);
            }
            *lip *= 2.0;
        }
    }
}

fn sorted_svd(svd: SVD<f64, nalgebra::Dyn, nalgebra::Dyn>) -> (DMatrix<f64>, DVector<f64>, DMatrix<f64>) {
    let u = svd.u.expect("requested U");
    let v_t = svd.v_t.expect("requested Vᵀ");
    let s = svd.singular_values;
    let mut order: Vec<usize> = (0..s.len()).collect();
    order.sort_by(|&a, &b| s[b].total_cmp(&s[a]));
    let u = DMatrix::from_fn(u.nrows(), order.len(), |i, j| u[(i, order[j])]);
    let v_t = DMatrix::from_fn(order.len(), v_t.ncols(), |i, j| v_t[(order[i], j)]);
    let s = DVector::from_iterator(order.len(), order.iter().map(|&i| s[i]));
    (u, s, v_t)
}

/// −Σ s_i ln s_i over the normalized singular values s_i = σ_i/Σσ of the
/// matrix whose columns are `columns`.
pub fn singular_value_entropy(columns: &[DVector<f64>]) -> f64 {
    if columns.is_empty() {
        return 0.0;
    }
    let m = DMatrix::from_columns(columns);
    let sv = SVD::new(m, false, false).singular_values;
    let total: f64 = sv.iter().sum();
    if total.is_nan() || total <= 0.0 {
        return 0.0;
    }
    sv.iter().map(|s| s / total).filter(|&s| s > 0.0).map(|s| -s * s.ln()).sum::<f64>().max(0.0)
}

/// Positivity-constrained reconstruction (see [`Reconstructor::positive`]).
pub fn reconstruct_positive(
    map: &MeasurementMap,
    scan: &IntensityScan,
    cfg: &SolverConfig,
) -> Result<ReconstructionReport> {
    Reconstructor::new(map)?.positive(scan, cfg)
}

/// Pseudoinverse reconstruction (see [`Reconstructor::pseudoinverse`]).
pub fn reconstruct_pseudoinverse(map: &MeasurementMap, scan: &IntensityScan) -> Result<ReconstructionReport> {
    Reconstructor::new(map)?.pseudoinverse(scan)
}

/// Uniqueness entropy for one scan (see [`Reconstructor::uniqueness_entropy`]).
pub fn uniqueness_entropy(
    map: &MeasurementMap,
    scan: &IntensityScan,
    cfg: &SolverConfig,
    estimator: Estimator,
) -> Result<f64> {
    Reconstructor::new(map)?.uniqueness_entropy(scan, cfg, estimator)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qstate::{hs_error, random_state, test_state};
    use crate::sensor::{build_measurement_map, simulate_scan, Noise, ScanGeometry};
    use approx::assert_abs_diff_eq;

    fn setup(basis: &ModeBasis, z: usize) -> MeasurementMap {
        build_measurement_map(basis, &ScanGeometry::with_planes(z).unwrap())
    }

    #[test]
    fn config_validation() {
        assert!(SolverConfig::default().validate().is_ok());
        let bad = SolverConfig { max_iterations: 0, ..Default::default() };
        assert!(bad.validate().is_err());
        let bad = SolverConfig { rel_tolerance: 0.0, ..Default::default() };
        assert!(bad.validate().is_err());
        let bad = SolverConfig { multistart: 0, ..Default::default() };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn test_state_is_recovered_up_to_its_mirror_image() {
        // Real superpositions of ±3 have mirror-symmetric scans at every
        // plane, so the data fix the state only up to the ℓ → −ℓ reflection.
        let b = ModeBasis::symmetric(4);
        let map = setup(&b, 2);
        let theta = std::f64::consts::PI / 5.0;
        let truth = test_state(0.3, theta, &b).unwrap();
        let mirror = test_state(0.3, std::f64::consts::FRAC_PI_2 - theta, &b).unwrap();
        let scan = simulate_scan(&truth, &map, Noise::None, 0).unwrap();
        let mirror_scan = simulate_scan(&mirror, &map, Noise::None, 0).unwrap();
        assert!((scan.values() - mirror_scan.values()).amax() < 1e-15);

        let rep = reconstruct_positive(&map, &scan, &SolverConfig::default()).unwrap();
        assert!(rep.converged);
        assert!(rep.final_objective() < 1e-6 * scan.values().norm());
        assert!(rep.density().is_ok());
        let gap = hs_error(&truth, &mirror).unwrap();
        let to_truth = hs_error(&rep.estimate, &truth).unwrap();
        let to_mirror = hs_error(&rep.estimate, &mirror).unwrap();
        // on the segment: √e_t + √e_m = √gap
        assert_abs_diff_eq!(to_truth.sqrt() + to_mirror.sqrt(), gap.sqrt(), epsilon = 1e-6);
    }

    #[test]
    fn recovers_random_pure_state_from_two_planes() {
        let b = ModeBasis::symmetric(4);
        let map = setup(&b, 2);
        let truth = random_state(&b, 1, 42).unwrap();
        let scan = simulate_scan(&truth, &map, Noise::None, 0).unwrap();
        let rep = reconstruct_positive(&map, &scan, &SolverConfig::default()).unwrap();
        assert!(rep.converged);
        assert!(hs_error(&rep.estimate, &truth).unwrap() <= 1e-6);
    }

    #[test]
    fn single_plane_recovery_in_nonnegative_span() {
        let b = ModeBasis::nonnegative(5).unwrap();
        let map = setup(&b, 1);
        let truth = DensityMatrix::basis_state(&b, 0).unwrap();
        let scan = simulate_scan(&truth, &map, Noise::None, 0).unwrap();
        let rep = reconstruct_positive(&map, &scan, &SolverConfig::default()).unwrap();
        assert!(hs_error(&rep.estimate, &truth).unwrap() <= 1e-8);
    }

    #[test]
    fn zero_data_gives_degenerate_estimate() {
        let b = ModeBasis::symmetric(1);
        let map = setup(&b, 1);
        let scan = IntensityScan::new(map.geometry().clone(), DVector::zeros(map.nrows()), None).unwrap();
        let rep = reconstruct_positive(&map, &scan, &SolverConfig::default()).unwrap();
        assert!(rep.degenerate_trace);
        assert_eq!(rep.raw_trace, 0.0);
        assert!(rep.estimate.entries().iter().all(|z| z.norm() == 0.0));
        assert!(rep.converged);
        let rep = reconstruct_pseudoinverse(&map, &scan).unwrap();
        assert!(rep.degenerate_trace);
    }

    #[test]
    fn pseudoinverse_solves_square_system() {
        let b = ModeBasis::nonnegative(2).unwrap();
        let g = ScanGeometry::new(2, 1.0, vec![0.0]).unwrap();
        let a = DMatrix::from_row_slice(
            4,
            4,
            &[
                2.0, 0.5, 0.0, 0.1, //
                0.3, 1.0, 0.2, 0.0, //
                0.0, 0.4, 1.5, 0.3, //
                0.1, 0.0, 0.2, 0.9,
            ],
        );
        let map = MeasurementMap::from_parts(b.clone(), g, a).unwrap();
        let rec = Reconstructor::new(&map).unwrap();
        assert_eq!(rec.rank(), 4);
        let amp = [num_complex::Complex64::new(0.8, 0.0), num_complex::Complex64::new(0.6, 0.0)];
        let truth = DensityMatrix::pure(&b, &amp).unwrap();
        let scan = simulate_scan(&truth, &map, Noise::None, 0).unwrap();
        let rep = rec.pseudoinverse(&scan).unwrap();
        assert!(hs_error(&rep.raw_estimate, &truth).unwrap() < 1e-24);
    }

    #[test]
    fn wide_map_is_padded() {
        let b = ModeBasis::nonnegative(3).unwrap();
        let g = ScanGeometry::new(2, 1.5, vec![0.0]).unwrap();
        let map = build_measurement_map(&b, &g);
        let rec = Reconstructor::new(&map).unwrap();
        assert!(rec.rank() <= 4);
        assert_eq!(rec.null_space().ncols(), 9 - rec.rank());
        let truth = random_state(&b, 1, 3).unwrap();
        let scan = simulate_scan(&truth, &map, Noise::None, 0).unwrap();
        let rep = rec.pseudoinverse(&scan).unwrap();
        assert!(rep.final_objective() < 1e-12);
    }

    #[test]
    fn mismatched_scan_rejected() {
        let b = ModeBasis::symmetric(1);
        let map = setup(&b, 1);
        let other = setup(&b, 2);
        let truth = DensityMatrix::basis_state(&b, 0).unwrap();
        let scan = simulate_scan(&truth, &other, Noise::None, 0).unwrap();
        assert!(matches!(
            reconstruct_positive(&map, &scan, &SolverConfig::default()),
            Err(Error::DimensionMismatch(_))
        ));
        assert!(reconstruct_pseudoinverse(&map, &scan).is_err());
    }

    #[test]
    fn non_accelerated_history_is_monotone() {
        let b = ModeBasis::symmetric(2);
        let map = setup(&b, 1);
        let truth = random_state(&b, 2, 17).unwrap();
        let scan = simulate_scan(&truth, &map, Noise::Poisson { total_counts: 1e4 }, 2).unwrap();
        for rule in [StepRule::Fixed, StepRule::Backtracking] {
            let cfg = SolverConfig { acceleration: false, step_rule: rule, max_iterations: 500, ..Default::default() };
            let rep = reconstruct_positive(&map, &scan, &cfg).unwrap();
            for w in rep.objective_history.windows(2) {
                assert!(w[1] <= w[0] * (1.0 + 1e-12), "{} > {}", w[1], w[0]);
            }
        }
        let rep = reconstruct_positive(&map, &scan, &SolverConfig::default()).unwrap();
        assert!(rep.final_objective() <= rep.objective_history[0]);
    }

    #[test]
    fn iteration_cap_is_not_an_error() {
        let b = ModeBasis::symmetric(3);
        let map = setup(&b, 2);
        let truth = random_state(&b, 3, 2).unwrap();
        let scan = simulate_scan(&truth, &map, Noise::None, 0).unwrap();
        let cfg = SolverConfig { max_iterations: 3, ..Default::default() };
        let rep = reconstruct_positive(&map, &scan, &cfg).unwrap();
        assert!(!rep.converged);
        assert_eq!(rep.iterations_used, 3);
        assert_eq!(rep.objective_history.len(), 4);
    }

    #[test]
    fn unit_trace_mode_keeps_trace() {
        let b = ModeBasis::symmetric(2);
        let map = setup(&b, 2);
        let truth = random_state(&b, 1, 5).unwrap();
        let scan = simulate_scan(&truth, &map, Noise::None, 0).unwrap();
        let cfg = SolverConfig { trace_mode: TraceMode::Unit, ..Default::default() };
        let rep = reconstruct_positive(&map, &scan, &cfg).unwrap();
        assert_abs_diff_eq!(rep.raw_trace, 1.0, epsilon = 1e-12);
        assert!(hs_error(&rep.estimate, &truth).unwrap() < 1e-6);
    }

    #[test]
    fn entropy_examples() {
        let v = DVector::from_vec(vec![1.0, 2.0, 3.0]);
        assert_abs_diff_eq!(singular_value_entropy(&[v.clone(), v.clone(), v.clone()]), 0.0, epsilon = 1e-12);
        let e1 = DVector::from_vec(vec![1.0, 0.0]);
        let e2 = DVector::from_vec(vec![0.0, 1.0]);
        assert_abs_diff_eq!(singular_value_entropy(&[e1, e2]), 2f64.ln(), epsilon = 1e-14);
    }

    #[test]
    fn entropy_needs_two_starts() {
        let b = ModeBasis::symmetric(1);
        let map = setup(&b, 1);
        let truth = DensityMatrix::basis_state(&b, 0).unwrap();
        let scan = simulate_scan(&truth, &map, Noise::None, 0).unwrap();
        let cfg = SolverConfig { multistart: 1, ..Default::default() };
        assert!(uniqueness_entropy(&map, &scan, &cfg, Estimator::Positive).is_err());
    }

    #[test]
    fn complete_measurement_has_zero_entropy() {
        let b = ModeBasis::nonnegative(3).unwrap();
        let map = setup(&b, 1);
        let truth = random_state(&b, 2, 8).unwrap();
        let scan = simulate_scan(&truth, &map, Noise::None, 0).unwrap();
        let cfg = SolverConfig { multistart: 4, ..Default::default() };
        for est in [Estimator::Positive, Estimator::Pseudoinverse] {
            let s = uniqueness_entropy(&map, &scan, &cfg, est).unwrap();
            assert!(s <= 1e-6, "{est:?}: {s}");
        }
    }
}
