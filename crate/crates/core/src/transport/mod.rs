//! Squared Wasserstein-2 distances between equal-size empirical measures.

pub mod lsap;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::{centered_cov, EmpiricalMeasure};
use crate::sampling::{sample_gaussian, standard_normal3};
use crate::sum::pairwise;
use crate::vecmat::{Sym3, Vec3};
use lsap::{CostRows, DenseCost};

/// Largest size accepted by the exact solver.
pub const MAX_ASSIGNMENT_SIZE: usize = 8192;

/// Above this size the squared distances are recomputed per row instead of
/// stored (the dense matrix would exceed 128 MiB).
pub const DENSE_LIMIT: usize = 4096;

/// Optimal matching between two equal-size point clouds.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AssignmentResult {
    /// `N⁻¹ Σ |x_i − y_{π(i)}|²`
    pub cost: f64,
    /// `π`, as `x` index → `y` index.
    pub permutation: Vec<usize>,
}

/// Squared Euclidean costs computed on demand.
pub struct LazySqEuclidean<'a> {
    pub x: &'a [Vec3],
    pub y: &'a [Vec3],
}

impl CostRows for LazySqEuclidean<'_> {
    fn n(&self) -> usize {
        self.x.len()
    }
    fn row<'a>(&'a self, i: usize, scratch: &'a mut [f64]) -> &'a [f64] {
        let xi = self.x[i];
        for (s, &yj) in scratch.iter_mut().zip(self.y) {
            *s = (xi - yj).norm2();
        }
        scratch
    }
}

/// Dense squared Euclidean cost matrix, rows filled in parallel.
pub fn sq_euclidean_dense(x: &[Vec3], y: &[Vec3]) -> DenseCost {
    let n = x.len();
    let mut data = vec![0.0; n * n];
    data.par_chunks_mut(n.max(1)).zip(x.par_iter()).for_each(|(row, &xi)| {
        for (c, &yj) in row.iter_mut().zip(y) {
            *c = (xi - yj).norm2();
        }
    });
    DenseCost::new(n, data)
}

fn matched_cost(x: &[Vec3], y: &[Vec3], perm: &[usize]) -> f64 {
    let d: Vec<f64> = perm.iter().enumerate().map(|(i, &j)| (x[i] - y[j]).norm2()).collect();
    pairwise(&d) / x.len() as f64
}

/// Exact squared W2 distance between uniform empirical measures of equal size.
pub fn w2sq_empirical(x: &EmpiricalMeasure, y: &EmpiricalMeasure) -> Result<AssignmentResult> {
    if x.len() != y.len() {
        return Err(Error::InvalidArgument(format!(
            "exact W2 needs equal sizes, got {} and {}",
            x.len(),
            y.len()
        )));
    }
    let n = x.len();
    if n > MAX_ASSIGNMENT_SIZE {
        return Err(Error::InvalidArgument(format!(
            "exact W2 supports at most {MAX_ASSIGNMENT_SIZE} atoms, got {n}"
        )));
    }
    let (xa, ya) = (x.atoms(), y.atoms());
    let permutation = if n <= DENSE_LIMIT {
        lsap::solve(&sq_euclidean_dense(xa, ya))
    } else {
        lsap::solve(&LazySqEuclidean { x: xa, y: ya })
    };
    Ok(AssignmentResult { cost: matched_cost(xa, ya, &permutation), permutation })
}

/// `(√V_x − √V_y)² + |m_x − m_y|²` with `m` the means and `V` the variances
/// (trace of the centered covariance). Never exceeds the squared W2 distance.
pub fn w2sq_lower_bound(x: &EmpiricalMeasure, y: &EmpiricalMeasure) -> f64 {
    let vx = centered_cov(x).trace().max(0.0);
    let vy = centered_cov(y).trace().max(0.0);
    (vx.sqrt() - vy.sqrt()).powi(2) + (x.mean() - y.mean()).norm2()
}

/// Squared W2 distance from `x` to a fresh iid sample of `N(0, cov)` of the
/// same size. Biased upward by the sampling error of the reference sample;
/// see [`gaussian_sampling_floor`].
pub fn w2sq_vs_gaussian<R: Rng + ?Sized>(x: &EmpiricalMeasure, cov: &Sym3, n_ref: usize, rng: &mut R) -> Result<f64> {
    if n_ref != x.len() {
        return Err(Error::InvalidArgument(format!(
            "reference sample size {n_ref} must match the ensemble size {}",
            x.len()
        )));
    }
    let reference = sample_gaussian(n_ref, Vec3::ZERO, cov, rng)?;
    Ok(w2sq_empirical(x, &reference)?.cost)
}

/// Squared W2 distance between two independent iid `N(0, cov)` samples of
/// size `n`: the bias reference for [`w2sq_vs_gaussian`].
pub fn gaussian_sampling_floor<R: Rng + ?Sized>(cov: &Sym3, n: usize, rng: &mut R) -> Result<f64> {
    let a = sample_gaussian(n, Vec3::ZERO, cov, rng)?;
    let b = sample_gaussian(n, Vec3::ZERO, cov, rng)?;
    Ok(w2sq_empirical(&a, &b)?.cost)
}

/// Sliced squared W2 over `n_dirs` random directions. A fast preview only:
/// it is a different quantity from the exact distance and is not used by any
/// rate estimate.
pub fn sliced_w2sq<R: Rng + ?Sized>(x: &EmpiricalMeasure, y: &EmpiricalMeasure, n_dirs: usize, rng: &mut R) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::SizeMismatch { left: x.len(), right: y.len() });
    }
    if n_dirs == 0 {
        return Err(Error::InvalidArgument("sliced W2 needs at least one direction".into()));
    }
    let mut total = 0.0;
    for _ in 0..n_dirs {
        let mut d = standard_normal3(rng);
        while d.norm2() == 0.0 {
            d = standard_normal3(rng);
        }
        let d = d / d.norm();
        let mut px: Vec<f64> = x.atoms().iter().map(|v| v.dot(d)).collect();
        let mut py: Vec<f64> = y.atoms().iter().map(|v| v.dot(d)).collect();
        px.sort_by(f64::total_cmp);
        py.sort_by(f64::total_cmp);
        total += px.iter().zip(&py).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / x.len() as f64;
    }
    Ok(total / n_dirs as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sampling::sample_uniform_sphere;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn cloud(rng: &mut impl Rng, n: usize) -> EmpiricalMeasure {
        EmpiricalMeasure::new((0..n).map(|_| standard_normal3(rng)).collect()).unwrap()
    }

    fn brute_force(x: &[Vec3], y: &[Vec3]) -> f64 {
        fn rec(k: usize, perm: &mut Vec<usize>, x: &[Vec3], y: &[Vec3], best: &mut f64) {
            if k == perm.len() {
                let c = perm.iter().enumerate().map(|(i, &j)| (x[i] - y[j]).norm2()).sum::<f64>();
                *best = best.min(c);
                return;
            }
            for s in k..perm.len() {
                perm.swap(k, s);
                rec(k + 1, perm, x, y, best);
                perm.swap(k, s);
            }
        }
        let mut best = f64::INFINITY;
        rec(0, &mut (0..x.len()).collect(), x, y, &mut best);
        best / x.len() as f64
    }

    #[test]
    fn examples() {
        let x = EmpiricalMeasure::new(vec![Vec3::ZERO]).unwrap();
        let y = EmpiricalMeasure::new(vec![Vec3::axis(0)]).unwrap();
        assert_eq!(w2sq_empirical(&x, &y).unwrap().cost, 1.0);
        let mut rng = ChaCha8Rng::seed_from_u64(50);
        let a = cloud(&mut rng, 30);
        let mut shuffled = a.atoms().to_vec();
        shuffled.reverse();
        let b = EmpiricalMeasure::new(shuffled).unwrap();
        assert_eq!(w2sq_empirical(&a, &b).unwrap().cost, 0.0);
        assert!(w2sq_empirical(&a, &x).is_err());
    }

    #[test]
    fn matches_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(51);
        for trial in 0..300 {
            let n = 2 + trial % 5;
            let x = cloud(&mut rng, n);
            let y = cloud(&mut rng, n);
            let got = w2sq_empirical(&x, &y).unwrap();
            let want = brute_force(x.atoms(), y.atoms());
            assert!((got.cost - want).abs() <= 1e-12 * (1.0 + want));
        }
    }

    #[test]
    fn translation_is_optimal() {
        let mut rng = ChaCha8Rng::seed_from_u64(52);
        let x = cloud(&mut rng, 100);
        let c = Vec3::new(0.3, -1.0, 0.25);
        let y = EmpiricalMeasure::new(x.atoms().iter().map(|&v| v + c).collect()).unwrap();
        let r = w2sq_empirical(&x, &y).unwrap();
        assert!((r.cost - c.norm2()).abs() < 1e-12);
        assert!(w2sq_lower_bound(&x, &y) >= c.norm2() - 1e-12);
        assert_eq!(r.permutation, (0..100).collect::<Vec<_>>());
    }

    #[test]
    fn lower_bound_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(53);
        let x = sample_uniform_sphere(200, &mut rng).unwrap();
        assert!(w2sq_lower_bound(&x, &x).abs() < 1e-15);
        let y = EmpiricalMeasure::new(x.atoms().iter().map(|&v| v * 2.0).collect()).unwrap();
        assert!((w2sq_lower_bound(&x, &y) - 1.0).abs() < 1e-12);
        for _ in 0..50 {
            let a = cloud(&mut rng, 40);
            let b = cloud(&mut rng, 40);
            assert!(w2sq_lower_bound(&a, &b) <= w2sq_empirical(&a, &b).unwrap().cost + 1e-12);
        }
    }

    #[test]
    fn lazy_and_dense_costs_agree() {
        let mut rng = ChaCha8Rng::seed_from_u64(54);
        let x = cloud(&mut rng, 200);
        let y = cloud(&mut rng, 200);
        let dense = lsap::solve(&sq_euclidean_dense(x.atoms(), y.atoms()));
        let lazy = lsap::solve(&LazySqEuclidean { x: x.atoms(), y: y.atoms() });
        assert_eq!(dense, lazy);
    }

    #[test]
    fn metric_sanity() {
        let mut rng = ChaCha8Rng::seed_from_u64(55);
        for _ in 0..50 {
            let a = cloud(&mut rng, 25);
            let b = cloud(&mut rng, 25);
            let c = cloud(&mut rng, 25);
            let ab = w2sq_empirical(&a, &b).unwrap().cost;
            let ba = w2sq_empirical(&b, &a).unwrap().cost;
            assert!((ab - ba).abs() < 1e-12);
            let bc = w2sq_empirical(&b, &c).unwrap().cost;
            let ac = w2sq_empirical(&a, &c).unwrap().cost;
            assert!(ac.sqrt() <= ab.sqrt() + bc.sqrt() + 1e-12);
        }
    }

    #[test]
    fn gaussian_reference_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(56);
        let zeros = EmpiricalMeasure::new(vec![Vec3::ZERO; 10]).unwrap();
        assert_eq!(w2sq_vs_gaussian(&zeros, &Sym3::ZERO, 10, &mut rng).unwrap(), 0.0);
        assert!(w2sq_vs_gaussian(&zeros, &Sym3::ZERO, 11, &mut rng).is_err());
        let cov = Sym3::scaled_identity(1.0 / 3.0);
        let small = gaussian_sampling_floor(&cov, 128, &mut rng).unwrap();
        let large = gaussian_sampling_floor(&cov, 1024, &mut rng).unwrap();
        assert!(large < small);
        let x = sample_uniform_sphere(1024, &mut rng).unwrap();
        let d = w2sq_vs_gaussian(&x, &cov, 1024, &mut rng).unwrap();
        assert!(d < 3.0 * large + 0.05, "{d} vs floor {large}");
    }

    #[test]
    fn sliced_is_below_exact_in_one_dimension() {
        let mut rng = ChaCha8Rng::seed_from_u64(57);
        let a = cloud(&mut rng, 64);
        let b = cloud(&mut rng, 64);
        let s = sliced_w2sq(&a, &b, 32, &mut rng).unwrap();
        assert!(s > 0.0 && s <= w2sq_empirical(&a, &b).unwrap().cost);
    }
}
