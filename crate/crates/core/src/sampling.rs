//! Initial-condition samplers and distributional diagnostics.
//!
//! Base Gaussians have variance 1/3 per axis, so the equilibrium is
//! `N(0, I/3)` and the mean kinetic energy `m₂` is 1, matching the
//! normalization of the Boltzmann sphere `S_N = {Σ v_i = 0, N⁻¹ Σ |v_i|² = 1}`.

use std::path::PathBuf;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::read_last_snapshot;
use crate::kernels::{moment, second_moment_matrix, EmpiricalMeasure};
use crate::vecmat::{sym3_eigh, sym3_sqrt, Sym3, Vec3, DEFAULT_CLIP};

fn default_cov() -> Sym3 {
    Sym3::scaled_identity(1.0 / 3.0)
}

fn default_tail_index() -> f64 {
    4.0
}

fn default_cap() -> f64 {
    8.0
}

/// How the initial velocities are drawn.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialCondition {
    /// iid `N(mean, cov)`.
    Gaussian {
        #[serde(default)]
        mean: Vec3,
        #[serde(default = "default_cov")]
        cov: Sym3,
    },
    /// Uniform law on `S_N`.
    UniformSphere {},
    /// Gaussian with `diag(axis_weights)` covariance, projected onto `S_N`.
    AnisotropicSphere { axis_weights: [f64; 3] },
    /// iid `N(±offset e₁, I/3)` with a fair random sign per particle.
    TwoBumps { offset: f64 },
    /// Pareto radii `r ≥ 1` with the given tail index, truncated at `cap`,
    /// isotropic directions, projected onto `S_N`.
    HeavyTail {
        #[serde(default = "default_tail_index")]
        tail_index: f64,
        #[serde(default = "default_cap")]
        cap: f64,
    },
    /// Last time slice of a snapshot CSV.
    File { path: PathBuf },
}

impl Default for InitialCondition {
    fn default() -> Self {
        InitialCondition::UniformSphere {}
    }
}

impl InitialCondition {
    pub fn validate(&self) -> Result<()> {
        match self {
            InitialCondition::Gaussian { mean, cov } => {
                if !mean.is_finite() || !cov.is_finite() {
                    return Err(Error::Config("gaussian mean and covariance must be finite".into()));
                }
                let e = sym3_eigh(cov)?;
                let tol = DEFAULT_CLIP * (1.0 + cov.trace().abs());
                if e.values[0] < -tol {
                    return Err(Error::NotPsd { eigenvalue: e.values[0], tolerance: tol });
                }
            }
            InitialCondition::AnisotropicSphere { axis_weights } => {
                if !axis_weights.iter().all(|w| *w > 0.0 && w.is_finite()) {
                    return Err(Error::Config(format!("axis weights must be positive, got {axis_weights:?}")));
                }
            }
            InitialCondition::TwoBumps { offset } => {
                if !offset.is_finite() {
                    return Err(Error::Config("two_bumps offset must be finite".into()));
                }
            }
            InitialCondition::HeavyTail { tail_index, cap } => {
                if !(*tail_index > 0.0 && tail_index.is_finite()) || !(*cap >= 1.0 && cap.is_finite()) {
                    return Err(Error::Config(format!(
                        "heavy_tail needs tail_index > 0 and cap ≥ 1, got {tail_index}, {cap}"
                    )));
                }
            }
            InitialCondition::UniformSphere {} | InitialCondition::File { .. } => {}
        }
        Ok(())
    }

    /// Draws `n` velocities. For `file` the size must match the snapshot.
    pub fn sample<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Result<EmpiricalMeasure> {
        self.validate()?;
        if n < 2 {
            return Err(Error::InvalidArgument(format!("need at least 2 particles, got {n}")));
        }
        match self {
            InitialCondition::Gaussian { mean, cov } => sample_gaussian(n, *mean, cov, rng),
            InitialCondition::UniformSphere {} => sample_uniform_sphere(n, rng),
            InitialCondition::AnisotropicSphere { axis_weights } => sample_anisotropic_sphere(n, *axis_weights, rng),
            InitialCondition::TwoBumps { offset } => sample_two_bumps(n, *offset, rng),
            InitialCondition::HeavyTail { tail_index, cap } => sample_heavy_tail(n, *tail_index, *cap, rng),
            InitialCondition::File { path } => {
                let snap = read_last_snapshot(path)?;
                if snap.velocities.len() != n {
                    return Err(Error::SizeMismatch { left: n, right: snap.velocities.len() });
                }
                EmpiricalMeasure::new(snap.velocities)
            }
        }
    }
}

#[inline]
pub fn standard_normal3<R: Rng + ?Sized>(rng: &mut R) -> Vec3 {
    Vec3::new(StandardNormal.sample(rng), StandardNormal.sample(rng), StandardNormal.sample(rng))
}

/// iid `N(mean, cov)`.
pub fn sample_gaussian<R: Rng + ?Sized>(n: usize, mean: Vec3, cov: &Sym3, rng: &mut R) -> Result<EmpiricalMeasure> {
    let root = sym3_sqrt(cov, DEFAULT_CLIP)?;
    EmpiricalMeasure::new((0..n).map(|_| mean + root.mul_vec(standard_normal3(rng))).collect())
}

/// Centers the atoms and rescales them to unit mean kinetic energy.
/// Returns `None` when all atoms coincide.
pub fn project_onto_sphere(atoms: &mut [Vec3]) -> Option<()> {
    let n = atoms.len() as f64;
    // two passes: the second removes the rounding left by the first
    for _ in 0..2 {
        let mean = atoms.iter().copied().sum::<Vec3>() / n;
        for a in atoms.iter_mut() {
            *a -= mean;
        }
        let energy = atoms.iter().map(|a| a.norm2()).sum::<f64>() / n;
        if !(energy > 0.0) {
            return None;
        }
        let s = 1.0 / energy.sqrt();
        for a in atoms.iter_mut() {
            *a = *a * s;
        }
    }
    Some(())
}

fn sphere_from<R: Rng + ?Sized>(n: usize, rng: &mut R, mut draw: impl FnMut(&mut R) -> Vec3) -> Result<EmpiricalMeasure> {
    // a degenerate draw has probability zero; retry rather than fail
    for _ in 0..16 {
        let mut atoms: Vec<Vec3> = (0..n).map(|_| draw(rng)).collect();
        if project_onto_sphere(&mut atoms).is_some() {
            return EmpiricalMeasure::new(atoms);
        }
    }
    Err(Error::DegenerateProjection)
}

/// Uniform law on `S_N`: `X_i = E_N^{-1/2}(Y_i − m_N)` with `Y_i` iid `N(0, I/3)`.
pub fn sample_uniform_sphere<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Result<EmpiricalMeasure> {
    let s = (1.0f64 / 3.0).sqrt();
    sphere_from(n, rng, |r| standard_normal3(r) * s)
}

/// Gaussian with covariance `diag(w)`, projected onto `S_N`.
pub fn sample_anisotropic_sphere<R: Rng + ?Sized>(n: usize, w: [f64; 3], rng: &mut R) -> Result<EmpiricalMeasure> {
    let s = [w[0].sqrt(), w[1].sqrt(), w[2].sqrt()];
    sphere_from(n, rng, |r| {
        let g = standard_normal3(r);
        Vec3::new(g.x * s[0], g.y * s[1], g.z * s[2])
    })
}

pub fn sample_two_bumps<R: Rng + ?Sized>(n: usize, offset: f64, rng: &mut R) -> Result<EmpiricalMeasure> {
    let s = (1.0f64 / 3.0).sqrt();
    EmpiricalMeasure::new(
        (0..n)
            .map(|_| {
                let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
                Vec3::new(sign * offset, 0.0, 0.0) + standard_normal3(rng) * s
            })
            .collect(),
    )
}

pub fn sample_heavy_tail<R: Rng + ?Sized>(n: usize, tail_index: f64, cap: f64, rng: &mut R) -> Result<EmpiricalMeasure> {
    sphere_from(n, rng, |r| {
        let u: f64 = 1.0 - r.random::<f64>(); // (0, 1]
        let radius = u.powf(-1.0 / tail_index).min(cap);
        let mut d = standard_normal3(r);
        while d.norm2() == 0.0 {
            d = standard_normal3(r);
        }
        d * (radius / d.norm())
    })
}

/// Largest eigenvalue of `N⁻¹ Σ x_i x_iᵀ` divided by `m₂`; lies in `(0, 1]`
/// and equals 1 exactly when all atoms are colinear through the origin.
pub fn spectral_radius_cov(x: &EmpiricalMeasure) -> Result<f64> {
    let m2 = moment(x, 2.0);
    if !(m2 > 0.0) {
        return Err(Error::InvalidArgument("spectral radius undefined for an all-zero ensemble".into()));
    }
    let e = sym3_eigh(&second_moment_matrix(x))?;
    Ok(e.values[2] / m2)
}
