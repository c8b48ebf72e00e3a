//! Acceptance suite: one test per criterion, each printing a single
//! `criterion N ... PASS|FAIL` line with the measured values.
//!
//! Run with `cargo test -p landau-core --test acceptance -- --nocapture`.

use std::sync::OnceLock;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use landau_core::coupling::{gaussian_w2_cost, gs_rotation, pair_rotation};
use landau_core::harness::experiments::{
    coupled_contraction, conservation_audit, equilibrate, gamma_check, moment_propagation, sampling_rate,
    weakform_check, AuditParams, CoupledParams, EquilibrateParams, GammaCheckParams, MomentParams, SamplingParams,
    WeakformParams,
};
use landau_core::harness::{Check, ExperimentReport, SimConfig, SystemKind};
use landau_core::kernels::{kernel_a, kernel_sigma};
use landau_core::sampling::standard_normal3;
use landau_core::simulator::run;
use landau_core::transport::{w2sq_empirical, w2sq_lower_bound};
use landau_core::vecmat::sym3_sqrt;
use landau_core::{EmpiricalMeasure, Gamma, InitialCondition, Mat3, Sym3, Vec3};

fn verdict(id: u32, name: &str, passed: bool, detail: &str, start: Instant) {
    let status = if passed { "PASS" } else { "FAIL" };
    println!("criterion {id:>2} {name}: {status} ({detail}) [{:.1} s]", start.elapsed().as_secs_f64());
}

fn describe(checks: &[&Check]) -> String {
    checks.iter().map(|c| format!("{}={:.4e}", c.name, c.value)).collect::<Vec<_>>().join(", ")
}

fn named<'a>(r: &'a ExperimentReport, name: &str) -> &'a Check {
    r.check_named(name).unwrap_or_else(|| panic!("report {} lacks check {name}", r.experiment))
}

// conservation and drift share the projection-off runs
fn unprojected_audits() -> &'static Vec<ExperimentReport> {
    static AUDITS: OnceLock<Vec<ExperimentReport>> = OnceLock::new();
    AUDITS.get_or_init(|| {
        [Gamma::MAXWELL, Gamma::ONE]
            .into_iter()
            .map(|gamma| conservation_audit(&AuditParams { gamma, ..AuditParams::default() }).unwrap())
            .collect()
    })
}

#[test]
fn criterion_01_conservation() {
    let start = Instant::now();
    let mut checks = Vec::new();
    for r in unprojected_audits() {
        checks.push(named(r, "max_momentum_residual").clone());
    }
    for gamma in [Gamma::MAXWELL, Gamma::ONE] {
        let p = AuditParams { gamma, dt_list: vec![1e-3], project: true, ..AuditParams::default() };
        let r = conservation_audit(&p).unwrap();
        checks.push(named(&r, "max_momentum_residual").clone());
        checks.push(named(&r, "max_abs_energy_residual").clone());
    }
    let passed = checks.iter().all(|c| c.passed);
    verdict(1, "conservation", passed, &describe(&checks.iter().collect::<Vec<_>>()), start);
    assert!(passed, "{checks:?}");
}

#[test]
fn criterion_02_energy_drift_order() {
    let start = Instant::now();
    let checks: Vec<&Check> = unprojected_audits()
        .iter()
        .flat_map(|r| r.checks.iter().filter(|c| c.name.starts_with("energy_drift_ratio")))
        .collect();
    assert_eq!(checks.len(), 2);
    let passed = checks.iter().all(|c| c.passed);
    verdict(2, "energy drift order (gamma 0, gamma 1)", passed, &describe(&checks), start);
    assert!(passed, "{checks:?}");
}

fn random_vec(rng: &mut ChaCha8Rng) -> Vec3 {
    let scale = 10f64.powf(rng.random_range(-3.0..2.0));
    standard_normal3(rng) * scale
}

fn maxwell_a(y: Vec3) -> Mat3 {
    kernel_a(y, Gamma::MAXWELL).to_mat3()
}

#[test]
fn criterion_03_pairing_identities() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst = [0.0f64; 3];
    for k in 0..100_000 {
        let x = random_vec(&mut rng);
        let y = match k % 4 {
            // nearly parallel, nearly antiparallel and generic pairs
            0 => x * rng.random_range(0.1..3.0) + standard_normal3(&mut rng) * 1e-9,
            1 => x * -rng.random_range(0.1..3.0) + standard_normal3(&mut rng) * 1e-9,
            _ => random_vec(&mut rng),
        };
        let scale = 1.0 + x.norm2() + y.norm2();
        let a = pair_rotation(x, y);
        let sx = kernel_sigma(x, Gamma::MAXWELL).to_mat3();
        let prod = a.mul(&a.transpose());
        worst[0] = worst[0].max(prod.sub(&maxwell_a(y)).max_abs() / scale);
        let inner = sx.inner(&a);
        worst[1] = worst[1].max((inner - (x.norm() * y.norm() + x.dot(y))).abs() / scale);
        let kill = sx.sub(&a.transpose()).mul_vec(x - y);
        worst[2] = worst[2].max(kill.max_abs() / scale);
    }
    let passed = worst.iter().all(|&w| w <= 1e-10);
    let detail = format!("relative errors: product {:.2e}, inner {:.2e}, kernel {:.2e}", worst[0], worst[1], worst[2]);
    verdict(3, "pairing matrix identities", passed, &detail, start);
    assert!(passed, "{detail}");
}

fn random_pd(rng: &mut ChaCha8Rng) -> Sym3 {
    let m = Mat3::from_cols(standard_normal3(rng), standard_normal3(rng), standard_normal3(rng));
    m.gram() + Sym3::scaled_identity(0.05)
}

/// Haar-distributed orthogonal matrix (either determinant) from
/// Gram–Schmidt on Gaussian columns.
fn random_orthogonal(rng: &mut ChaCha8Rng) -> Mat3 {
    let a = standard_normal3(rng);
    let e1 = a / a.norm();
    let b = standard_normal3(rng);
    let b = b - e1 * b.dot(e1);
    let e2 = b / b.norm();
    let e3 = e1.cross(e2) * if rng.random::<bool>() { 1.0 } else { -1.0 };
    Mat3::from_cols(e1, e2, e3)
}

/// Orthogonal matrix close to `u`: `u` times the Cayley transform of a small
/// skew matrix.
fn near(u: &Mat3, rng: &mut ChaCha8Rng, size: f64) -> Mat3 {
    let w = standard_normal3(rng) * size;
    let skew = Mat3::from_rows([[0.0, -w.z, w.y], [w.z, 0.0, -w.x], [-w.y, w.x, 0.0]]);
    let cayley = Mat3::IDENTITY.sub(&skew).inverse().unwrap().mul(&Mat3::IDENTITY.add(&skew));
    u.mul(&cayley)
}

fn rotation_cost(r1: &Sym3, r2: &Sym3, q: &Mat3) -> f64 {
    r1.to_mat3().sub(&r2.to_mat3().mul(q)).frob2()
}

#[test]
fn criterion_04_rotation_optimality() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut orth: f64 = 0.0;
    let mut cost_err: f64 = 0.0;
    let mut beat: f64 = f64::NEG_INFINITY;
    for k in 0..10_000 {
        let s1 = random_pd(&mut rng);
        let s2 = random_pd(&mut rng);
        let u = gs_rotation(&s1, &s2).unwrap();
        orth = orth.max(u.transpose().mul(&u).sub(&Mat3::IDENTITY).max_abs());
        let r1 = sym3_sqrt(&s1, 0.0).unwrap();
        let r2 = sym3_sqrt(&s2, 0.0).unwrap();
        let cu = rotation_cost(&r1, &r2, &u);
        let closed = gaussian_w2_cost(&s1, &s2).unwrap();
        cost_err = cost_err.max((cu - closed).abs() / closed.max(1e-300).max(s1.trace() * 1e-8));
        if k < 100 {
            for j in 0..1000 {
                let q = if j % 2 == 0 { random_orthogonal(&mut rng) } else { near(&u, &mut rng, 1e-3) };
                beat = beat.max(cu - rotation_cost(&r1, &r2, &q));
            }
        }
    }
    let passed = orth <= 1e-9 && cost_err <= 1e-8 && beat <= 1e-9;
    let detail = format!("orthogonality {orth:.2e}, relative cost error {cost_err:.2e}, best improvement {beat:.2e}");
    verdict(4, "optimal rotation", passed, &detail, start);
    assert!(passed, "{detail}");
}

#[test]
fn criterion_05_central_functional_sign() {
    let start = Instant::now();
    let r = gamma_check(&GammaCheckParams::default()).unwrap();
    let checks = [
        named(&r, "fraction_gamma0_nonpositive"),
        named(&r, "max_gamma0"),
        named(&r, "defect_constant"),
    ];
    let passed = checks.iter().all(|c| c.passed) && checks[2].value.is_finite();
    verdict(5, "central functional sign", passed, &describe(&checks), start);
    assert!(passed, "{checks:?}");
}

fn brute_force(x: &[Vec3], y: &[Vec3]) -> f64 {
    fn rec(k: usize, used: &mut Vec<bool>, acc: f64, x: &[Vec3], y: &[Vec3], best: &mut f64) {
        if k == x.len() {
            *best = best.min(acc);
            return;
        }
        for j in 0..y.len() {
            if !used[j] {
                used[j] = true;
                rec(k + 1, used, acc + (x[k] - y[j]).norm2(), x, y, best);
                used[j] = false;
            }
        }
    }
    let mut best = f64::INFINITY;
    rec(0, &mut vec![false; y.len()], 0.0, x, y, &mut best);
    best / x.len() as f64
}

fn cloud(n: usize, rng: &mut ChaCha8Rng) -> Vec<Vec3> {
    let shift = standard_normal3(rng);
    (0..n).map(|_| shift + standard_normal3(rng) * rng.random_range(0.2..2.0)).collect()
}

fn w2(x: &[Vec3], y: &[Vec3]) -> f64 {
    w2sq_empirical(&EmpiricalMeasure::new(x.to_vec()).unwrap(), &EmpiricalMeasure::new(y.to_vec()).unwrap())
        .unwrap()
        .cost
}

#[test]
fn criterion_06_exact_transport() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut brute_err: f64 = 0.0;
    let mut bound_excess = f64::NEG_INFINITY;
    for k in 0..1000 {
        let n = 1 + k % 6;
        let x = cloud(n, &mut rng);
        let y = cloud(n, &mut rng);
        let c = w2(&x, &y);
        brute_err = brute_err.max((c - brute_force(&x, &y)).abs());
        let lb = w2sq_lower_bound(&EmpiricalMeasure::new(x).unwrap(), &EmpiricalMeasure::new(y).unwrap());
        bound_excess = bound_excess.max(lb - c);
    }
    let mut convexity_excess = f64::NEG_INFINITY;
    for _ in 0..1000 {
        let n = rng.random_range(4..40);
        let k = rng.random_range(1..n);
        let (f, g) = (cloud(k, &mut rng), cloud(n - k, &mut rng));
        let (f2, g2) = (cloud(k, &mut rng), cloud(n - k, &mut rng));
        let lambda = k as f64 / n as f64;
        let mixed = w2(&[f.clone(), g.clone()].concat(), &[f2.clone(), g2.clone()].concat());
        let bound = lambda * w2(&f, &f2) + (1.0 - lambda) * w2(&g, &g2);
        convexity_excess = convexity_excess.max((mixed - bound) / (1.0 + bound));
    }
    let passed = brute_err <= 1e-12 && bound_excess <= 1e-12 && convexity_excess <= 1e-12;
    let detail = format!(
        "brute-force gap {brute_err:.2e}, lower-bound excess {bound_excess:.2e}, convexity excess {convexity_excess:.2e}"
    );
    verdict(6, "exact transport", passed, &detail, start);
    assert!(passed, "{detail}");
}

#[test]
fn criterion_07_sampling_rate() {
    let start = Instant::now();
    let r = sampling_rate(&SamplingParams::default()).unwrap();
    let checks: Vec<&Check> = r.checks.iter().collect();
    verdict(7, "iid sampling rate", r.passed, &describe(&checks), start);
    assert!(r.passed, "{checks:?}");
}

#[test]
fn criterion_08_covariance_relaxation() {
    let start = Instant::now();
    let r = equilibrate(&EquilibrateParams::default()).unwrap();
    let checks = [named(&r, "max_covariance_z"), named(&r, "anisotropy_decay_rate")];
    let passed = checks.iter().all(|c| c.passed);
    verdict(8, "covariance relaxation", passed, &describe(&checks), start);
    assert!(passed, "{checks:?}");
}

#[test]
fn criterion_09_equilibration() {
    let start = Instant::now();
    let p = EquilibrateParams {
        axis_weights: [16.0, 1.0, 1.0],
        t_end: 5.0,
        record_interval: 0.5,
        replicas: 4,
        w2: true,
        ..EquilibrateParams::default()
    };
    let r = equilibrate(&p).unwrap();
    let checks = [named(&r, "w2_final_over_initial"), named(&r, "w2_final_over_floor")];
    let passed = checks.iter().all(|c| c.passed);
    verdict(9, "equilibration", passed, &describe(&checks), start);
    assert!(passed, "{checks:?}");
}

#[test]
fn criterion_10_coupled_contraction() {
    let start = Instant::now();
    let r = coupled_contraction(&CoupledParams::default()).unwrap();
    let checks = [named(&r, "max_increase_z"), named(&r, "min_rousset_d")];
    let passed = checks.iter().all(|c| c.passed);
    verdict(10, "coupled contraction", passed, &describe(&checks), start);
    assert!(passed, "{checks:?}");
}

#[test]
fn criterion_11_moment_propagation() {
    let start = Instant::now();
    let r = moment_propagation(&MomentParams::default()).unwrap();
    let checks: Vec<&Check> = r.checks.iter().collect();
    verdict(11, "moment propagation", r.passed, &describe(&checks), start);
    assert!(r.passed, "{checks:?}");
}

#[test]
fn criterion_12_weak_form() {
    let start = Instant::now();
    let r = weakform_check(&WeakformParams::default()).unwrap();
    let checks: Vec<&Check> = r.checks.iter().collect();
    verdict(12, "weak form", r.passed, &describe(&checks), start);
    assert!(r.passed, "{checks:?}");
}

fn max_row_gap(a: &[landau_core::io::DiagnosticRow], b: &[landau_core::io::DiagnosticRow]) -> f64 {
    assert_eq!(a.len(), b.len());
    let mut gap: f64 = 0.0;
    for (x, y) in a.iter().zip(b) {
        let (fx, fy) = (x.csv_fields(), y.csv_fields());
        for (u, v) in fx.iter().zip(&fy) {
            let (u, v): (f64, f64) = (u.parse().unwrap(), v.parse().unwrap());
            if u.is_nan() && v.is_nan() {
                continue;
            }
            gap = gap.max((u - v).abs() / (1.0 + u.abs()));
        }
    }
    gap
}

#[test]
fn criterion_13_determinism() {
    let start = Instant::now();
    let mut across: f64 = 0.0;
    let mut repeat_exact = true;
    for system in [SystemKind::Conservative, SystemKind::Nonconservative, SystemKind::CoupledPair, SystemKind::Nonlinear] {
        let cfg = SimConfig {
            system,
            n: 300,
            dt: Some(1e-3),
            t_end: 0.05,
            seed: 13,
            w2_ref: true,
            initial: InitialCondition::AnisotropicSphere { axis_weights: [4.0, 1.0, 1.0] },
            threads: Some(1),
            ..SimConfig::default()
        };
        let a = run(&cfg).unwrap();
        let again = run(&cfg).unwrap();
        let b = run(&SimConfig { threads: Some(3), ..cfg.clone() }).unwrap();
        repeat_exact &= a.rows.iter().map(|r| r.csv_fields()).eq(again.rows.iter().map(|r| r.csv_fields()));
        across = across.max(max_row_gap(&a.rows, &b.rows));
    }
    let p = EquilibrateParams {
        n: 64,
        t_end: 0.1,
        record_interval: 0.05,
        dt: 1e-2,
        replicas: 4,
        w2: true,
        floor_samples: 2,
        ..EquilibrateParams::default()
    };
    let e1 = equilibrate(&EquilibrateParams { threads: Some(1), ..p.clone() }).unwrap();
    let e1b = equilibrate(&EquilibrateParams { threads: Some(1), ..p.clone() }).unwrap();
    let e3 = equilibrate(&EquilibrateParams { threads: Some(3), ..p }).unwrap();
    repeat_exact &= e1.to_json().unwrap() == e1b.to_json().unwrap();
    for (s, t) in e1.series.iter().zip(&e3.series) {
        for (u, v) in s.y.iter().zip(&t.y) {
            across = across.max((u - v).abs() / (1.0 + u.abs()));
        }
    }
    let passed = repeat_exact && across <= 1e-12;
    let detail = format!("same-thread reruns bit-exact: {repeat_exact}, largest gap across thread counts {across:.2e}");
    verdict(13, "determinism", passed, &detail, start);
    assert!(passed, "{detail}");
}
