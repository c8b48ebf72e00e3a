use criterion::{criterion_group, criterion_main, BatchSize, Criterion};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use landau_core::coupling::{gamma_eps, RotationArgument};
use landau_core::harness::experiments::random_coupling;
use landau_core::sampling::{sample_gaussian, sample_uniform_sphere};
use landau_core::simulator::step_conservative;
use landau_core::transport::w2sq_empirical;
use landau_core::vecmat::sym3_eigh;
use landau_core::{Gamma, NoisePlan, ParticleEnsemble, Sym3, Vec3};

fn conservative_step(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let v = sample_uniform_sphere(256, &mut rng).unwrap().into_atoms();
    let plan = NoisePlan::new(1);
    for (name, gamma) in [("step_n256_maxwell", Gamma::MAXWELL), ("step_n256_hard", Gamma::ONE)] {
        let ens = ParticleEnsemble::new(v.clone(), gamma).unwrap();
        c.bench_function(name, |b| b.iter(|| step_conservative(&ens, 1e-3, &plan).unwrap()));
    }
}

fn assignment(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let cov = Sym3::scaled_identity(1.0 / 3.0);
    let x = sample_gaussian(512, Vec3::ZERO, &cov, &mut rng).unwrap();
    let y = sample_gaussian(512, Vec3::ZERO, &cov, &mut rng).unwrap();
    c.bench_function("w2sq_n512", |b| b.iter(|| w2sq_empirical(&x, &y).unwrap()));
}

fn eigh(c: &mut Criterion) {
    let s = Sym3::from([2.0, 0.3, -0.1, 1.0, 0.25, 0.5]);
    c.bench_function("sym3_eigh", |b| b.iter(|| sym3_eigh(std::hint::black_box(&s)).unwrap()));
}

fn central_functional(c: &mut Criterion) {
    c.bench_function("gamma_eps_n32", |b| {
        b.iter_batched(
            || random_coupling(32, 3, 0).unwrap(),
            |r| gamma_eps(&r, Gamma::MAXWELL, 1e-2, RotationArgument::Paired).unwrap(),
            BatchSize::SmallInput,
        )
    });
}

criterion_group!(benches, conservative_step, assignment, eigh, central_functional);
criterion_main!(benches);
