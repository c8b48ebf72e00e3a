//! Euler–Maruyama integrators for the particle systems.
//!
//! A step of the conservative system moves particle `i` by
//!
//! ```text
//! Σ_{j≠i} c_ij,   c_ij = (dt/N) b(V_i − V_j) + √(dt/N) σ(V_i − V_j) ξ^{ij}
//! ```
//!
//! and `c_ji = −c_ij` exactly (odd drift, even σ, antisymmetric noise), so
//! each pair term is computed once. The increment of `i` is the ascending row
//! sum over `j > i` minus the ascending column sum over `j < i`. Rows are
//! processed in blocks of bounded total length, giving `O(N)` memory and a
//! summation order that depends only on `N`, never on the thread count.

mod coupled;
mod noise;
mod run;

use std::ops::{Add, Sub};

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::kernels::{field_a_sqrt, field_b, kernel_b, sigma_apply, EmpiricalMeasure, Gamma};
use crate::vecmat::Vec3;

pub use coupled::{step_coupled_pair, PairedEnsemble};
pub use noise::{auxiliary_rng, NoiseKind, NoisePlan};
pub use run::{run, run_partial, Trajectory};

/// Any speed above this aborts the run.
pub const BLOW_UP_SPEED: f64 = 1e6;

/// Upper bound on pair terms held in memory at once.
const BLOCK_ENTRIES: usize = 1 << 18;

/// `1e-3 · min(1, 1 / max_i |v_i|^γ)`: the drift of hard potentials
/// stiffens like `|v|^{1+γ}`.
pub fn default_dt(velocities: &[Vec3], gamma: Gamma) -> f64 {
    let vmax = velocities.iter().map(|v| v.norm()).fold(0.0, f64::max);
    let stiff = gamma.pow(vmax);
    if stiff > 1.0 {
        1e-3 / stiff
    } else {
        1e-3
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ParticleEnsemble {
    velocities: Vec<Vec3>,
    gamma: Gamma,
    step_index: u64,
    t: f64,
    ref_momentum: Vec3,
    ref_energy: f64,
}

impl ParticleEnsemble {
    pub fn new(velocities: Vec<Vec3>, gamma: Gamma) -> Result<Self> {
        if velocities.len() < 2 {
            return Err(Error::InvalidArgument(format!(
                "a particle system needs at least 2 particles, got {}",
                velocities.len()
            )));
        }
        if let Some(i) = velocities.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(format!("velocity {i} is not finite")));
        }
        let ref_momentum = velocities.iter().copied().sum();
        let ref_energy = energy_of(&velocities);
        Ok(ParticleEnsemble { velocities, gamma, step_index: 0, t: 0.0, ref_momentum, ref_energy })
    }

    pub fn velocities(&self) -> &[Vec3] {
        &self.velocities
    }

    pub fn len(&self) -> usize {
        self.velocities.len()
    }

    pub fn is_empty(&self) -> bool {
        self.velocities.is_empty()
    }

    pub fn gamma(&self) -> Gamma {
        self.gamma
    }

    pub fn step_index(&self) -> u64 {
        self.step_index
    }

    pub fn t(&self) -> f64 {
        self.t
    }

    pub fn ref_momentum(&self) -> Vec3 {
        self.ref_momentum
    }

    pub fn ref_energy(&self) -> f64 {
        self.ref_energy
    }

    pub fn momentum(&self) -> Vec3 {
        self.velocities.iter().copied().sum()
    }

    pub fn energy(&self) -> f64 {
        energy_of(&self.velocities)
    }

    /// `|Σ v_i − Σ v_i(0)|`
    pub fn momentum_residual(&self) -> f64 {
        (self.momentum() - self.ref_momentum).norm()
    }

    /// `Σ |v_i|² − Σ |v_i(0)|²`, signed.
    pub fn energy_residual(&self) -> f64 {
        self.energy() - self.ref_energy
    }

    pub fn measure(&self) -> EmpiricalMeasure {
        EmpiricalMeasure::new(self.velocities.clone()).expect("ensemble is nonempty and finite")
    }

    /// Same ensemble with particles listed as `perm[0], perm[1], ...`.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        ParticleEnsemble { velocities: perm.iter().map(|&p| self.velocities[p]).collect(), ..self.clone() }
    }

    fn commit(&mut self, next: Vec<Vec3>, dt: f64) -> Result<()> {
        check_blow_up(&next, self.step_index)?;
        self.velocities = next;
        self.step_index += 1;
        self.t += dt;
        Ok(())
    }

    /// One step of the conservative system, in place. On error the
    /// ensemble is left unchanged.
    pub fn advance_conservative(&mut self, dt: f64, noise: &NoisePlan) -> Result<()> {
        check_dt(dt)?;
        let inc = conservative_increments(&self.velocities, self.gamma, dt, self.step_index, noise);
        let next = self.velocities.iter().zip(&inc).map(|(&v, &d)| v + d).collect();
        self.commit(next, dt)
    }

    /// One step of the system whose ordered pairs carry independent noise.
    pub fn advance_nonconservative(&mut self, dt: f64, noise: &NoisePlan) -> Result<()> {
        check_dt(dt)?;
        let n = self.len();
        let g = self.gamma;
        let v = &self.velocities;
        let (drift, _) = antisymmetric_sums(n, |i, row: &mut [Vec3]| {
            for (k, c) in row.iter_mut().enumerate() {
                *c = pair_drift(v[i] - v[i + 1 + k], g, dt, n);
            }
            0.0
        });
        let next = if noise.is_enabled() {
            let scale = (dt / n as f64).sqrt();
            let step = self.step_index;
            (0..n)
                .into_par_iter()
                .map_init(
                    || vec![Vec3::ZERO; n],
                    |eta, i| {
                        noise.independent_row(step, i, n, eta);
                        let mut s = Vec3::ZERO;
                        for j in 0..n {
                            if j != i {
                                s += sigma_apply(v[i] - v[j], eta[j], g);
                            }
                        }
                        v[i] + (drift[i] + s * scale)
                    },
                )
                .collect()
        } else {
            v.iter().zip(&drift).map(|(&v, &d)| v + d).collect()
        };
        self.commit(next, dt)
    }

    /// Shifts all velocities so the momentum equals its initial value, then
    /// rescales about the mean so the energy does too. The affine map with
    /// this property closest in mean square to the identity.
    pub fn project_conservation(&mut self) -> Result<()> {
        let n = self.len() as f64;
        let target_mean = self.ref_momentum / n;
        let shift = target_mean - self.momentum() / n;
        let centered: Vec<Vec3> = self.velocities.iter().map(|&v| v + shift - target_mean).collect();
        let spread = energy_of(&centered);
        let target_spread = self.ref_energy - n * target_mean.norm2();
        if !(spread > 0.0) || !(target_spread > 0.0) {
            return Err(Error::DegenerateProjection);
        }
        let s = (target_spread / spread).sqrt();
        self.velocities = centered.into_iter().map(|c| target_mean + c * s).collect();
        Ok(())
    }
}

pub fn step_conservative(ens: &ParticleEnsemble, dt: f64, noise: &NoisePlan) -> Result<ParticleEnsemble> {
    let mut next = ens.clone();
    next.advance_conservative(dt, noise)?;
    Ok(next)
}

pub fn step_nonconservative(ens: &ParticleEnsemble, dt: f64, noise: &NoisePlan) -> Result<ParticleEnsemble> {
    let mut next = ens.clone();
    next.advance_nonconservative(dt, noise)?;
    Ok(next)
}

pub fn project_conservation(ens: &ParticleEnsemble) -> Result<ParticleEnsemble> {
    let mut next = ens.clone();
    next.project_conservation()?;
    Ok(next)
}

/// One step of the nonlinear process against a frozen field:
/// `w + dt b(μ, w) + √dt a(μ, w)^{1/2} ξ`.
pub fn step_nonlinear(w: Vec3, field: &EmpiricalMeasure, gamma: Gamma, dt: f64, xi: Vec3) -> Result<Vec3> {
    check_dt(dt)?;
    let root = field_a_sqrt(field, w, gamma)?;
    Ok(w + field_b(field, w, gamma) * dt + root.mul_vec(xi) * dt.sqrt())
}

fn energy_of(v: &[Vec3]) -> f64 {
    v.iter().map(|v| v.norm2()).sum()
}

fn check_dt(dt: f64) -> Result<()> {
    if dt > 0.0 && dt.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("time step must be positive and finite, got {dt}")))
    }
}

fn check_blow_up(v: &[Vec3], step: u64) -> Result<()> {
    for (i, x) in v.iter().enumerate() {
        let speed = x.norm();
        if !(speed <= BLOW_UP_SPEED) {
            return Err(Error::BlowUp { step, particle: i, speed });
        }
    }
    Ok(())
}

#[inline]
fn pair_drift(z: Vec3, gamma: Gamma, dt: f64, n: usize) -> Vec3 {
    kernel_b(z, gamma) * (dt / n as f64)
}

/// Per-particle increments of one conservative step.
pub(crate) fn conservative_increments(v: &[Vec3], gamma: Gamma, dt: f64, step: u64, noise: &NoisePlan) -> Vec<Vec3> {
    let n = v.len();
    let scale = (dt / n as f64).sqrt();
    let (inc, _) = antisymmetric_sums(n, |i, row: &mut [Vec3]| {
        if noise.is_enabled() {
            noise.pair_row(step, i, n, row);
            for (k, c) in row.iter_mut().enumerate() {
                *c = conservative_pair_term(v[i] - v[i + 1 + k], *c, gamma, dt, n, scale);
            }
        } else {
            for (k, c) in row.iter_mut().enumerate() {
                *c = pair_drift(v[i] - v[i + 1 + k], gamma, dt, n);
            }
        }
        0.0
    });
    inc
}

#[inline]
pub(crate) fn conservative_pair_term(z: Vec3, xi: Vec3, gamma: Gamma, dt: f64, n: usize, scale: f64) -> Vec3 {
    pair_drift(z, gamma, dt, n) + sigma_apply(z, xi, gamma) * scale
}

/// Values that can be accumulated by [`antisymmetric_sums`].
pub(crate) trait PairValue: Copy + Send + Sync + Add<Output = Self> + Sub<Output = Self> {
    const ZERO: Self;
}

impl PairValue for Vec3 {
    const ZERO: Self = Vec3::ZERO;
}

/// Two pair terms evolved side by side.
#[derive(Clone, Copy, Debug, PartialEq)]
pub(crate) struct Both(pub Vec3, pub Vec3);

impl Add for Both {
    type Output = Both;
    fn add(self, o: Both) -> Both {
        Both(self.0 + o.0, self.1 + o.1)
    }
}

impl Sub for Both {
    type Output = Both;
    fn sub(self, o: Both) -> Both {
        Both(self.0 - o.0, self.1 - o.1)
    }
}

impl PairValue for Both {
    const ZERO: Self = Both(Vec3::ZERO, Vec3::ZERO);
}

/// For an antisymmetric pair term `c_ji = −c_ij`, returns
/// `Σ_{j>i} c_ij − Σ_{j<i} c_ji` for every `i`, plus the per-row scalars
/// returned by `fill`.
///
/// `fill(i, row)` must write `c_{i,i+1+k}` into `row[k]` for all `k`.
pub(crate) fn antisymmetric_sums<T, F>(n: usize, fill: F) -> (Vec<T>, Vec<f64>)
where
    T: PairValue,
    F: Fn(usize, &mut [T]) -> f64 + Sync,
{
    let mut row_sum = vec![T::ZERO; n];
    let mut col_sum = vec![T::ZERO; n];
    let mut extra = vec![0.0; n];
    let mut buf: Vec<T> = Vec::new();
    let mut a = 0;
    while a + 1 < n {
        let mut b = a;
        let mut len = 0;
        while b + 1 < n && (len == 0 || len + (n - b - 1) <= BLOCK_ENTRIES) {
            len += n - b - 1;
            b += 1;
        }
        buf.clear();
        buf.resize(len, T::ZERO);
        let mut offsets = Vec::with_capacity(b - a);
        let mut rows: Vec<(usize, &mut [T])> = Vec::with_capacity(b - a);
        let mut rest = buf.as_mut_slice();
        let mut off = 0;
        for i in a..b {
            let (row, tail) = rest.split_at_mut(n - i - 1);
            offsets.push(off);
            off += row.len();
            rows.push((i, row));
            rest = tail;
        }
        let sums: Vec<(T, f64)> = rows
            .into_par_iter()
            .map(|(i, row)| {
                let e = fill(i, row);
                let mut s = T::ZERO;
                for &c in row.iter() {
                    s = s + c;
                }
                (s, e)
            })
            .collect();
        for (k, (s, e)) in sums.into_iter().enumerate() {
            row_sum[a + k] = s;
            extra[a + k] = e;
        }
        let block = &buf;
        let offsets = &offsets;
        col_sum[a + 1..].par_iter_mut().enumerate().for_each(|(k, acc)| {
            let j = a + 1 + k;
            for i in a..b.min(j) {
                *acc = *acc + block[offsets[i - a] + (j - i - 1)];
            }
        });
        a = b;
    }
    let inc = row_sum.into_iter().zip(col_sum).map(|(r, c)| r - c).collect();
    (inc, extra)
}
