//! Property tests over randomly generated inputs.

use proptest::prelude::*;

use landau_core::coupling::{alignment_defect, gamma_eps, gs_rotation, pair_rotation, rousset_d, RotationArgument};
use landau_core::kernels::{kernel_a, kernel_b, kernel_sigma, mean_generator, Linear, SquaredNorm};
use landau_core::sampling::sample_uniform_sphere;
use landau_core::simulator::{project_conservation, step_conservative};
use landau_core::transport::w2sq_empirical;
use landau_core::vecmat::{pinv_sqrt_apply, sym3_sqrt};
use landau_core::{EmpiricalCoupling, EmpiricalMeasure, Gamma, Mat3, NoisePlan, ParticleEnsemble, Sym3, Vec3};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn vec3(scale: f64) -> impl Strategy<Value = Vec3> {
    prop::array::uniform3(-scale..scale).prop_map(Vec3::from)
}

fn nonzero_vec3() -> impl Strategy<Value = Vec3> {
    vec3(10.0).prop_filter("nonzero", |v| v.norm() > 1e-3)
}

fn cloud(n: std::ops::Range<usize>) -> impl Strategy<Value = Vec<Vec3>> {
    prop::collection::vec(vec3(3.0), n)
}

fn gamma() -> impl Strategy<Value = Gamma> {
    prop_oneof![Just(Gamma::MAXWELL), (0.0..=1.0f64).prop_map(|g| Gamma::new(g).unwrap())]
}

fn mat3() -> impl Strategy<Value = Mat3> {
    (vec3(2.0), vec3(2.0), vec3(2.0)).prop_map(|(a, b, c)| Mat3::from_cols(a, b, c))
}

fn psd() -> impl Strategy<Value = Sym3> {
    mat3().prop_map(|m| m.gram())
}

fn pd() -> impl Strategy<Value = Sym3> {
    psd().prop_map(|s| s + Sym3::scaled_identity(0.05))
}

fn distinct(v: &[Vec3]) -> bool {
    let m = v.iter().copied().sum::<Vec3>() / v.len() as f64;
    v.iter().any(|x| (*x - m).norm() > 1e-3)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn square_root_squares_back(s in psd()) {
        let r = sym3_sqrt(&s, 1e-10).unwrap();
        let back = r.sandwich(&Sym3::IDENTITY);
        prop_assert!((back - s).max_abs() <= 1e-10 * (1.0 + s.frob()));
    }

    #[test]
    fn kernels_have_parity(v in vec3(10.0), g in gamma()) {
        prop_assert_eq!(kernel_a(-v, g), kernel_a(v, g));
        prop_assert_eq!(kernel_sigma(-v, g), kernel_sigma(v, g));
        prop_assert_eq!(kernel_b(-v, g), -kernel_b(v, g));
    }

    #[test]
    fn kernel_is_a_scaled_projection(v in nonzero_vec3(), w in vec3(1.0), g in gamma()) {
        let a = kernel_a(v, g);
        let lam = v.norm().powf(2.0 + g.value());
        let tol = 1e-10 * (1.0 + lam);
        prop_assert!(a.mul_vec(v).max_abs() <= tol * v.norm());
        let perp = w - v * (w.dot(v) / v.norm2());
        prop_assert!((a.mul_vec(perp) - perp * lam).max_abs() <= tol * (1.0 + perp.norm()));
    }

    #[test]
    fn collision_identities(v in vec3(5.0), vs in vec3(5.0), g in gamma()) {
        let z = v - vs;
        let r = z.norm();
        let a = kernel_a(z, g);
        let scale = 1e-10 * (1.0 + r.powf(2.0 + g.value())) * (1.0 + v.norm2() + vs.norm2());
        prop_assert!((a.trace() - 2.0 * r.powf(2.0 + g.value())).abs() <= scale);
        let rg = if r == 0.0 { 0.0 } else { r.powf(g.value()) };
        let want = rg * (v.norm2() * vs.norm2() - v.dot(vs).powi(2));
        prop_assert!((a.quad(v) - want).abs() <= scale * (1.0 + v.norm2()));
        let want_b = -2.0 * rg * (v.norm2() - v.dot(vs));
        prop_assert!((kernel_b(z, g).dot(v) - want_b).abs() <= scale * (1.0 + v.norm()));
    }

    #[test]
    fn generator_sums_vanish_for_collision_invariants(v in cloud(2..12), g in gamma(), e in vec3(1.0)) {
        let mu = EmpiricalMeasure::new(v.clone()).unwrap();
        let scale = 1.0 + v.iter().map(|x| x.norm2()).fold(0.0, f64::max).powf(1.0 + g.value() / 2.0);
        prop_assert!(mean_generator(&Linear(e), &mu, g).abs() <= 1e-12 * scale * (1.0 + e.norm()));
        prop_assert!(mean_generator(&SquaredNorm, &mu, g).abs() <= 1e-9 * scale * scale);
    }

    #[test]
    fn pair_noise_is_antisymmetric(seed: u64, step in 0u64..1000, i in 0usize..50, j in 0usize..50) {
        prop_assume!(i != j);
        let plan = NoisePlan::new(seed);
        prop_assert_eq!(plan.pair(step, i, j, 50), -plan.pair(step, j, i, 50));
    }

    #[test]
    fn conservative_step_keeps_momentum(v in cloud(2..40), g in gamma(), seed: u64) {
        let ens = ParticleEnsemble::new(v.clone(), g).unwrap();
        let next = step_conservative(&ens, 1e-3, &NoisePlan::new(seed)).unwrap();
        let total: f64 = v.iter().map(|x| x.norm()).sum();
        prop_assert!(next.momentum_residual() <= 1e-12 * (1.0 + total));
    }

    #[test]
    fn projection_restores_invariants(v in cloud(2..40), g in gamma(), seed: u64) {
        prop_assume!(distinct(&v));
        let ens = ParticleEnsemble::new(v, g).unwrap();
        let mut stepped = ens.clone();
        for _ in 0..3 {
            stepped = step_conservative(&stepped, 1e-2, &NoisePlan::new(seed)).unwrap();
        }
        let p = project_conservation(&stepped).unwrap();
        let e = ens.energy();
        prop_assert!(p.momentum_residual() <= 1e-12 * (1.0 + e.sqrt()));
        prop_assert!(p.energy_residual().abs() <= 1e-12 * (1.0 + e));
    }

    #[test]
    fn relabeled_noise_gives_the_relabeled_step(v in cloud(3..24), seed: u64, shuffle: u64) {
        let n = v.len();
        let mut perm: Vec<usize> = (0..n).collect();
        rand::seq::SliceRandom::shuffle(perm.as_mut_slice(), &mut ChaCha8Rng::seed_from_u64(shuffle));
        let ens = ParticleEnsemble::new(v, Gamma::MAXWELL).unwrap();
        let plan = NoisePlan::new(seed);
        let a = step_conservative(&ens, 1e-2, &plan).unwrap().permuted(&perm);
        let b = step_conservative(&ens.permuted(&perm), 1e-2, &plan.relabeled(perm).unwrap()).unwrap();
        for (x, y) in a.velocities().iter().zip(b.velocities()) {
            prop_assert!((*x - *y).max_abs() <= 1e-12 * (1.0 + x.norm()));
        }
    }

    #[test]
    fn pairing_matrix_is_parity_even(x in vec3(5.0), y in vec3(5.0)) {
        prop_assert_eq!(pair_rotation(-x, -y), pair_rotation(x, y));
    }

    #[test]
    fn alignment_defect_is_nonnegative(a in vec3(5.0), b in vec3(5.0)) {
        let d = alignment_defect(a, b);
        prop_assert!(d >= 0.0);
        prop_assert!((d - (a.norm() * b.norm() - a.dot(b))).abs() <= 1e-12 * (1.0 + a.norm() * b.norm()));
        prop_assert_eq!(alignment_defect(a, a), 0.0);
    }

    #[test]
    fn coupling_functionals_on_the_diagonal(v in cloud(2..10)) {
        prop_assume!(distinct(&v));
        let diag = EmpiricalCoupling::diagonal(&EmpiricalMeasure::new(v).unwrap());
        prop_assert_eq!(rousset_d(&diag), 0.0);
        prop_assert!(gamma_eps(&diag, Gamma::MAXWELL, 1e-2, RotationArgument::Paired).unwrap().abs() <= 1e-9);
        // without regularization the field matrices must be definite
        if let Ok(g0) = gamma_eps(&diag, Gamma::MAXWELL, 0.0, RotationArgument::Paired) {
            prop_assert!(g0.abs() <= 1e-9);
        }
    }

    #[test]
    fn rotation_discretization_bound(s1 in prop::collection::vec(mat3(), 3..8), s2 in prop::collection::vec(mat3(), 3..8)) {
        let k = s1.len().min(s2.len());
        let mean_gram = |s: &[Mat3]| {
            let mut acc = Sym3::scaled_identity(0.0);
            for m in s {
                acc += m.gram();
            }
            acc * (1.0 / s.len() as f64)
        };
        let (a, b) = (&s1[..k], &s2[..k]);
        let c1 = mean_gram(a);
        let c2 = mean_gram(b);
        prop_assume!(c1.trace() > 0.0 && c2.trace() > 0.0);
        let u = match gs_rotation(&c1, &c2) { Ok(u) => u, Err(_) => return Ok(()) };
        let r1 = sym3_sqrt(&c1, 1e-10).unwrap().to_mat3();
        let r2 = sym3_sqrt(&c2, 1e-10).unwrap().to_mat3();
        let lhs = r1.sub(&r2.mul(&u)).frob2();
        let rhs = a.iter().zip(b).map(|(x, y)| x.sub(y).frob2()).sum::<f64>() / k as f64;
        prop_assert!(lhs <= rhs + 1e-9 * (1.0 + rhs));
    }

    #[test]
    fn normalized_factors_have_identity_mean(a in prop::collection::vec(psd(), 2..6)) {
        let mut m = Sym3::scaled_identity(0.0);
        for x in &a {
            m += x.sandwich(&Sym3::IDENTITY);
        }
        let m = m * (1.0 / a.len() as f64);
        let e = landau_core::vecmat::sym3_eigh(&m).unwrap();
        prop_assume!(e.values[0] > 1e-6 * (1.0 + m.trace()));
        let mut acc = Mat3::ZERO;
        for x in &a {
            let bj = pinv_sqrt_apply(&m, &x.to_mat3(), 1e-12).unwrap();
            acc = acc.add(&bj.mul(&bj.transpose()));
        }
        prop_assert!(acc.scale(1.0 / a.len() as f64).sub(&Mat3::IDENTITY).max_abs() <= 1e-8);
    }

    #[test]
    fn square_root_is_holder(a in pd(), b in pd(), lambda in 0.01..100.0f64) {
        let ratio = |a: &Sym3, b: &Sym3| {
            let d = (sym3_sqrt(a, 1e-10).unwrap() - sym3_sqrt(b, 1e-10).unwrap()).frob();
            d / (*a - *b).frob().sqrt()
        };
        prop_assume!((a - b).frob() > 1e-8);
        let r = ratio(&a, &b);
        prop_assert!(r.is_finite() && r <= 3f64.sqrt());
        prop_assert!((ratio(&(a * lambda), &(b * lambda)) - r).abs() <= 1e-6 * (1.0 + r));
    }

    #[test]
    fn transport_is_a_metric(x in cloud(3..9), y0 in cloud(9..10), z0 in cloud(9..10)) {
        let n = x.len();
        let m = |v: &[Vec3]| EmpiricalMeasure::new(v[..n].to_vec()).unwrap();
        let (x, y, z) = (m(&x), m(&y0), m(&z0));
        let xy = w2sq_empirical(&x, &y).unwrap().cost;
        prop_assert!((xy - w2sq_empirical(&y, &x).unwrap().cost).abs() <= 1e-12 * (1.0 + xy));
        let yz = w2sq_empirical(&y, &z).unwrap().cost;
        let xz = w2sq_empirical(&x, &z).unwrap().cost;
        prop_assert!(xz.sqrt() <= xy.sqrt() + yz.sqrt() + 1e-12);
        prop_assert_eq!(w2sq_empirical(&x, &x).unwrap().cost, 0.0);
    }

    #[test]
    fn block_bound(x in cloud(12..13), y in cloud(12..13), blocks in prop_oneof![Just(2usize), Just(3), Just(4)]) {
        let whole = w2sq_empirical(&EmpiricalMeasure::new(x.clone()).unwrap(), &EmpiricalMeasure::new(y.clone()).unwrap())
            .unwrap()
            .cost;
        let size = x.len() / blocks;
        let parts: f64 = (0..blocks)
            .map(|k| {
                let r = k * size..(k + 1) * size;
                w2sq_empirical(&EmpiricalMeasure::new(x[r.clone()].to_vec()).unwrap(), &EmpiricalMeasure::new(y[r].to_vec()).unwrap())
                    .unwrap()
                    .cost
            })
            .sum::<f64>()
            / blocks as f64;
        prop_assert!(whole <= parts + 1e-12 * (1.0 + parts));
    }

    #[test]
    fn uniform_sphere_constraints(n in 2usize..200, seed: u64) {
        let s = sample_uniform_sphere(n, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
        let again = sample_uniform_sphere(n, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
        prop_assert_eq!(s.atoms(), again.atoms());
        prop_assert!(s.mean().max_abs() <= 1e-12);
        let m2 = s.atoms().iter().map(|v| v.norm2()).sum::<f64>() / n as f64;
        prop_assert!((m2 - 1.0).abs() <= 1e-12);
    }
}
