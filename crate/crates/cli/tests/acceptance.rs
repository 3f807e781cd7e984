//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Exits 0 after reporting unless `OAMTOMO_ACCEPTANCE_STRICT=1`, in which case
//! any FAIL makes the run fail.

use std::f64::consts::TAU;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use oamtomo::optics::{beam_radius, lg_amplitude, BeamGeometry, ModeIndex, TransversePoint};
use oamtomo::qstate::{
    hs_error, hs_inner, matricize, project_psd, random_state, vectorize, vectorize_matrix, CMatrix, HermitianOperator,
    HermitianVector, ModeBasis, TraceMode,
};
use oamtomo::sensor::{
    build_measurement_map, independent_detections, pixel_value_complex, simulate_scan, IntensityScan, MeasurementMap,
    Noise, ScanGeometry, DEFAULT_PLANES, DEFAULT_RANK_TOL,
};
use oamtomo::solver::{Reconstructor, SolverConfig};
use oamtomo_cli::commands::{entropy_sweep, error_sweep};
use oamtomo_cli::ExperimentSpec;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

type Criterion = (&'static str, fn() -> Outcome);

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

fn counts(basis: &ModeBasis, z_max: usize) -> Vec<usize> {
    (1..=z_max)
        .map(|z| {
            let map = build_measurement_map(basis, &ScanGeometry::with_planes(z).unwrap());
            independent_detections(&map, DEFAULT_RANK_TOL).unwrap()
        })
        .collect()
}

fn noiseless(rho: &oamtomo::DensityMatrix, map: &MeasurementMap) -> IntensityScan {
    simulate_scan(rho, map, Noise::None, 0).unwrap()
}

fn rank_counts() -> Outcome {
    let n = counts(&ModeBasis::symmetric(7), 10);
    let pass = n[0] == 78 && n[1] == 146 && n[7..].iter().all(|&x| x == 218);
    outcome(pass, format!("ell_max=7: n_Z = {n:?}"))
}

fn formula_sweep() -> Outcome {
    let mut bad = Vec::new();
    for ell_max in 1..=7u32 {
        let d = 2 * ell_max as usize + 1;
        let n = counts(&ModeBasis::symmetric(ell_max), DEFAULT_PLANES.len());
        let plateau = d * d - (d - 1) / 2;
        let z_min = ell_max as usize + 1;
        let ok = n[0] == (d * d + 6 * d - 3) / 4
            && n[1] == (d * d + 5 * d - 8) / 2
            && n[z_min - 2] < plateau
            && n[z_min - 1..].iter().all(|&x| x == plateau);
        if !ok {
            bad.push(format!("ell_max={ell_max}: {n:?}"));
        }
    }
    let detail =
        if bad.is_empty() { "ell_max 1..=7 match at Z=1, Z=2 and the plateau".to_string() } else { bad.join("; ") };
    outcome(bad.is_empty(), detail)
}

fn nonnegative_completeness() -> Outcome {
    let g = ScanGeometry::with_planes(1).unwrap();
    let mut worst: f64 = 0.0;
    let mut ranks_ok = true;
    for d in 2..=8 {
        let b = ModeBasis::nonnegative(d).unwrap();
        let map = build_measurement_map(&b, &g);
        ranks_ok &= independent_detections(&map, DEFAULT_RANK_TOL).unwrap() == d * d;
        let rec = Reconstructor::new(&map).unwrap();
        for s in 0..20 {
            let rho = random_state(&b, d, 31 * d as u64 + s).unwrap();
            let est = rec.pseudoinverse(&noiseless(&rho, &map)).unwrap();
            worst = worst.max(hs_error(&est.estimate, &rho).unwrap());
        }
    }
    outcome(ranks_ok && worst <= 1e-8, format!("ranks d² for d=2..=8: {ranks_ok}; worst pinv hs_error {worst:.2e}"))
}

fn compressive_recovery() -> Outcome {
    let b = ModeBasis::symmetric(7);
    let map = build_measurement_map(&b, &ScanGeometry::with_planes(2).unwrap());
    let rec = Reconstructor::new(&map).unwrap();
    let cfg = SolverConfig::default();
    let mut recovered = 0;
    let mut pinv_worse = 0;
    let mut worst_pos: f64 = 0.0;
    for s in 0..100 {
        let rho = random_state(&b, 1, 40_000 + s).unwrap();
        let scan = noiseless(&rho, &map);
        let pos = hs_error(&rec.positive(&scan, &cfg).unwrap().estimate, &rho).unwrap();
        let pinv = hs_error(&rec.pseudoinverse(&scan).unwrap().estimate, &rho).unwrap();
        worst_pos = worst_pos.max(pos);
        recovered += (pos <= 1e-6) as usize;
        pinv_worse += (pinv > pos) as usize;
    }
    outcome(
        recovered >= 95 && pinv_worse == 100,
        format!("{recovered}/100 recovered to 1e-6 (worst {worst_pos:.2e}); pinv worse in {pinv_worse}/100"),
    )
}

fn trend_reproduction() -> Outcome {
    let spec = ExperimentSpec::from_json(
        None,
        &["basis.ell_max=7".into(), "error_sweep.z_values=[1,2,3]".into(), "error_sweep.ranks=[1,2,4,8,15]".into()],
    )
    .unwrap();
    assert_eq!(spec.error_sweep.trials, 50);
    let res = error_sweep(&spec).unwrap();
    let ranks = &spec.error_sweep.ranks;
    let mut monotone = true;
    let mut thresholds = Vec::new();
    let mut table = Vec::new();
    for &z in &spec.error_sweep.z_values {
        let e: Vec<f64> = ranks.iter().map(|&r| res.cell(15, z, r).unwrap().mean_positive).collect();
        let p: Vec<f64> = ranks.iter().map(|&r| res.cell(15, z, r).unwrap().mean_pinv).collect();
        monotone &= e.windows(2).all(|w| w[0] <= w[1]);
        // first rank whose error exceeds 10× the rank-1 error; None = never
        thresholds.push(ranks.iter().zip(&e).find(|(_, &x)| x > 10.0 * e[0]).map(|(&r, _)| r));
        let row: Vec<String> = e.iter().zip(&p).map(|(a, b)| format!("{a:.2e}/{b:.2e}")).collect();
        table.push(format!("Z={z} [{}]", row.join(" ")));
    }
    let key = |t: Option<usize>| t.unwrap_or(usize::MAX);
    let increasing = thresholds.windows(2).all(|w| key(w[0]) < key(w[1]));
    outcome(
        monotone && increasing,
        format!(
            "non-decreasing in rank: {monotone}; 10× thresholds {thresholds:?} increasing: {increasing}; \
             positive/pinv means {}",
            table.join(", ")
        ),
    )
}

fn entropy_diagnostic() -> Outcome {
    let spec = ExperimentSpec::from_json(
        None,
        &["basis.ell_max=4".into(), "entropy_sweep.z_values=[1,2]".into(), "solver.multistart=20".into()],
    )
    .unwrap();
    assert_eq!(spec.entropy_sweep.states, 20);
    let rows = entropy_sweep(&spec).unwrap();
    let (z1, z2) = (&rows[0], &rows[1]);
    let pass = z2.mean_positive < 0.05 && z2.mean_positive < z1.mean_positive && z2.mean_pinv > z2.mean_positive;
    outcome(
        pass,
        format!(
            "positive S(Z=1)={:.4} S(Z=2)={:.4}; pinv S(Z=1)={:.4} S(Z=2)={:.4}",
            z1.mean_positive, z2.mean_positive, z1.mean_pinv, z2.mean_pinv
        ),
    )
}

fn random_hermitian(d: usize, rng: &mut ChaCha8Rng) -> CMatrix {
    let g = CMatrix::from_fn(d, d, |_, _| Complex64::new(rng.sample(StandardNormal), rng.sample(StandardNormal)));
    (&g + g.adjoint()) * Complex64::new(0.5, 0.0)
}

fn numerical_hygiene() -> Outcome {
    let geo = BeamGeometry::normalized();
    let mut rng = ChaCha8Rng::seed_from_u64(77);

    // normalization by Simpson quadrature over r ∈ [0, 8w], trapezoid in φ
    let mut norm_err: f64 = 0.0;
    for ell in -7..=7 {
        for &zeta in &[0.0, 0.5, 1.0] {
            let z = zeta * geo.rayleigh_range();
            let (nr, nphi) = (4000, 8);
            let h = 8.0 * beam_radius(&geo, z) / nr as f64;
            let mut total = 0.0;
            for k in 0..nphi {
                let phi = TAU * k as f64 / nphi as f64;
                for i in 0..=nr {
                    let r = i as f64 * h;
                    let w = if i == 0 || i == nr {
                        1.0
                    } else if i % 2 == 1 {
                        4.0
                    } else {
                        2.0
                    };
                    let a = lg_amplitude(ModeIndex::new(ell), &geo, &TransversePoint::new(r, phi, z).unwrap());
                    total += w * a.norm_sqr() * r * h / 3.0 * TAU / nphi as f64;
                }
            }
            norm_err = norm_err.max((total - 1.0).abs());
        }
    }

    let b = ModeBasis::symmetric(7);
    let g = ScanGeometry::new(19, 3.0, DEFAULT_PLANES.to_vec()).unwrap();
    let mut imag: f64 = 0.0;
    for s in 0..50 {
        let rho = random_state(&b, 1 + s % 15, 500 + s as u64).unwrap();
        for i in 0..g.len() {
            imag = imag.max(pixel_value_complex(&rho, &g.sample_point(i)).im.abs());
        }
    }

    let b3 = ModeBasis::symmetric(3);
    let map = build_measurement_map(&b3, &ScanGeometry::with_planes(2).unwrap());
    let rec = Reconstructor::new(&map).unwrap();
    let scan = simulate_scan(&random_state(&b3, 2, 1).unwrap(), &map, Noise::Poisson { total_counts: 1e4 }, 2).unwrap();
    let prob = rec.problem(&scan).unwrap();
    let f = |x: &DVector<f64>| 0.5 * (map.matrix() * x - scan.values()).norm_squared();
    let mut grad_err: f64 = 0.0;
    for _ in 0..5 {
        let x = DVector::from_fn(b3.real_dim(), |_, _| rng.random_range(-0.5..0.5));
        let g = prob.gradient(&x);
        let fd = DVector::from_fn(x.len(), |i, _| {
            let (mut xp, mut xm) = (x.clone(), x.clone());
            xp[i] += 1e-4;
            xm[i] -= 1e-4;
            (f(&xp) - f(&xm)) / 2e-4
        });
        grad_err = grad_err.max((&g - &fd).norm() / g.norm());
    }

    let mut idem: f64 = 0.0;
    let mut iso: f64 = 0.0;
    for _ in 0..50 {
        let h = HermitianOperator::new(b3.clone(), random_hermitian(7, &mut rng)).unwrap();
        for mode in [TraceMode::None, TraceMode::Unit] {
            let p = project_psd(&h, mode);
            idem = idem.max((p.entries() - project_psd(&p, mode).entries()).norm());
        }
        let (x, y) = (random_hermitian(7, &mut rng), random_hermitian(7, &mut rng));
        iso = iso.max((hs_inner(&x, &y) - vectorize_matrix(&x).unwrap().dot(&vectorize_matrix(&y).unwrap())).abs());
    }

    let pass = norm_err <= 1e-6 && imag <= 1e-12 && grad_err <= 1e-6 && idem <= 1e-12 && iso <= 1e-12;
    outcome(
        pass,
        format!(
            "normalization {norm_err:.1e}, imaginary part {imag:.1e}, gradient {grad_err:.1e}, \
             idempotence {idem:.1e}, isometry {iso:.1e}"
        ),
    )
}

/// Minimizes ½‖A·vec(BB†) − p‖² over square complex B: gradient descent
/// with Armijo backtracking, best of several random starts.
fn factored_minimum(a: &DMatrix<f64>, p: &DVector<f64>, basis: &ModeBasis, seed: u64) -> f64 {
    let d = basis.dim();
    let f = |b: &CMatrix| 0.5 * (a * vectorize_matrix(&(b * b.adjoint())).unwrap() - p).norm_squared();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best = f64::INFINITY;
    for _ in 0..6 {
        let mut b =
            CMatrix::from_fn(d, d, |_, _| Complex64::new(rng.sample(StandardNormal), rng.sample(StandardNormal)) * 0.3);
        let mut fb = f(&b);
        let mut step = 1.0;
        'descent: for _ in 0..200_000 {
            let x = vectorize_matrix(&(&b * b.adjoint())).unwrap();
            let gv = a.tr_mul(&(a * x - p));
            let g = matricize(&HermitianVector::new(basis.clone(), gv).unwrap());
            let grad = g.entries() * &b * Complex64::new(2.0, 0.0);
            let gn: f64 = grad.iter().map(|z| z.norm_sqr()).sum();
            if gn < 1e-26 {
                break;
            }
            loop {
                let trial = &b - &grad * Complex64::new(step, 0.0);
                let ft = f(&trial);
                if ft <= fb - 1e-4 * step * gn {
                    b = trial;
                    fb = ft;
                    step *= 2.0;
                    break;
                }
                step /= 2.0;
                if step < 1e-20 {
                    break 'descent;
                }
            }
        }
        best = best.min(fb);
    }
    best
}

fn small_instance_oracle() -> Outcome {
    let cases = [
        (ModeBasis::nonnegative(2).unwrap(), 2, 2),
        (ModeBasis::nonnegative(2).unwrap(), 3, 1),
        (ModeBasis::symmetric(1), 3, 2),
        (ModeBasis::symmetric(1), 2, 1),
        (ModeBasis::from_ells(vec![-1, 2]).unwrap(), 1, 2),
        (ModeBasis::from_ells(vec![0, 3, 5]).unwrap(), 4, 1),
    ];
    let cfg = SolverConfig { rel_tolerance: 1e-14, max_iterations: 200_000, ..SolverConfig::default() };
    let mut worst: f64 = 0.0;
    let mut count = 0;
    for (i, (basis, n, planes)) in cases.iter().enumerate() {
        for k in 0..5u64 {
            let seed = 1000 + 10 * i as u64 + k;
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let g = ScanGeometry::new(*n, 1.0, (0..*planes).map(|j| j as f64).collect()).unwrap();
            let a = DMatrix::from_fn(g.len(), basis.real_dim(), |_, _| rng.sample::<f64, _>(StandardNormal));
            let p = DVector::from_fn(g.len(), |_, _| rng.random_range(0.0..1.0));
            let map = MeasurementMap::from_parts(basis.clone(), g.clone(), a.clone()).unwrap();
            let scan = IntensityScan::new(g, p.clone(), None).unwrap();
            let rep = Reconstructor::new(&map).unwrap().positive(&scan, &cfg).unwrap();
            let x = vectorize(&rep.raw_estimate).into_coords();
            let ours = 0.5 * (&a * x - &p).norm_squared();
            worst = worst.max((ours - factored_minimum(&a, &p, basis, seed)).abs());
            count += 1;
        }
    }
    outcome(worst <= 1e-6, format!("{count} problems with d ≤ 3, worst objective gap {worst:.1e}"))
}

fn main() {
    let criteria: [Criterion; 8] = [
        ("rank-count exactness", rank_counts),
        ("formula sweep", formula_sweep),
        ("nonnegative-span completeness", nonnegative_completeness),
        ("compressive recovery", compressive_recovery),
        ("trend reproduction", trend_reproduction),
        ("entropy diagnostic", entropy_diagnostic),
        ("numerical hygiene", numerical_hygiene),
        ("small-instance oracle", small_instance_oracle),
    ];
    let only: Option<usize> = std::env::var("OAMTOMO_ACCEPTANCE_ONLY").ok().and_then(|s| s.parse().ok());
    let mut failed = 0;
    let mut ran = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        if only.is_some_and(|k| k != i + 1) {
            continue;
        }
        let t = Instant::now();
        let o = check();
        ran += 1;
        failed += (!o.pass) as usize;
        println!(
            "{} [{}] {name}: {} ({:.1}s)",
            if o.pass { "PASS" } else { "FAIL" },
            i + 1,
            o.detail,
            t.elapsed().as_secs_f64()
        );
    }
    println!("acceptance: {}/{ran} criteria passed", ran - failed);
    let strict = std::env::var("OAMTOMO_ACCEPTANCE_STRICT").is_ok_and(|v| v == "1");
    if strict && failed > 0 {
        std::process::exit(1);
    }
}
