//! Two Maxwell-molecule particle systems driven by the same pair noise.
//!
//! The first side is stepped exactly as the conservative system. On the
//! second side the pair noise enters through the pairing matrix
//! `A(V_i − V_j, W_i − W_j)` instead of `σ(W_i − W_j)`, which keeps the
//! second side a correct copy of the conservative dynamics while making
//! `N⁻¹ Σ |V_i − W_i|²` decrease in expectation.

use crate::coupling::{alignment_defect, pair_rotation_apply, rousset_d, EmpiricalCoupling};
use crate::error::{Error, Result};
use crate::kernels::kernel_b;
use crate::sum::pairwise;
use crate::transport::w2sq_empirical;
use crate::vecmat::Vec3;

use super::{
    antisymmetric_sums, check_blow_up, check_dt, conservative_pair_term, Both, NoiseKind, NoisePlan, ParticleEnsemble,
};

#[derive(Clone, Debug, PartialEq)]
pub struct PairedEnsemble {
    v_side: ParticleEnsemble,
    w_side: ParticleEnsemble,
    eps: f64,
}

impl PairedEnsemble {
    pub fn new(v_side: ParticleEnsemble, w_side: ParticleEnsemble, eps: f64) -> Result<Self> {
        if v_side.len() != w_side.len() {
            return Err(Error::SizeMismatch { left: v_side.len(), right: w_side.len() });
        }
        if v_side.gamma() != w_side.gamma() {
            return Err(Error::InvalidArgument("both sides must share the kernel exponent".into()));
        }
        if !(eps >= 0.0 && eps.is_finite()) {
            return Err(Error::InvalidArgument(format!("regularization must be finite and nonnegative, got {eps}")));
        }
        Ok(PairedEnsemble { v_side, w_side, eps })
    }

    /// Pairs `w` with `v_side` by an optimal assignment, so the initial
    /// `N⁻¹ Σ |V_i − W_i|²` is the squared W2 distance of the two clouds.
    pub fn optimally_paired(v_side: ParticleEnsemble, w: Vec<Vec3>, eps: f64) -> Result<Self> {
        let w_measure = crate::kernels::EmpiricalMeasure::new(w)?;
        let assignment = w2sq_empirical(&v_side.measure(), &w_measure)?;
        let atoms = w_measure.atoms();
        let paired = assignment.permutation.iter().map(|&j| atoms[j]).collect();
        let w_side = ParticleEnsemble::new(paired, v_side.gamma())?;
        Self::new(v_side, w_side, eps)
    }

    pub fn v_side(&self) -> &ParticleEnsemble {
        &self.v_side
    }

    pub fn w_side(&self) -> &ParticleEnsemble {
        &self.w_side
    }

    pub fn eps(&self) -> f64 {
        self.eps
    }

    pub fn len(&self) -> usize {
        self.v_side.len()
    }

    pub fn is_empty(&self) -> bool {
        self.v_side.is_empty()
    }

    pub fn coupling(&self) -> EmpiricalCoupling {
        EmpiricalCoupling::zip(self.v_side.velocities(), self.w_side.velocities()).expect("sides have equal length")
    }

    /// `N⁻¹ Σ |V_i − W_i|²`
    pub fn pair_dist(&self) -> f64 {
        let d: Vec<f64> =
            self.v_side.velocities().iter().zip(self.w_side.velocities()).map(|(&v, &w)| (v - w).norm2()).collect();
        pairwise(&d) / self.len() as f64
    }

    pub fn rousset_d(&self) -> f64 {
        rousset_d(&self.coupling())
    }

    pub fn project_conservation(&mut self) -> Result<()> {
        self.v_side.project_conservation()?;
        self.w_side.project_conservation()
    }

    /// One step of both sides; returns the predicted decrease of
    /// `N⁻¹ Σ |V_i − W_i|²` over the step,
    /// `(2dt/N²) Σ_{i,j} (|ΔV_ij||ΔW_ij| − ΔV_ij·ΔW_ij) − 6ε² dt`.
    ///
    /// Pair noise comes from `noise` (shared by both sides), the per-particle
    /// `ε` noise from the same plan's auxiliary streams. Maxwell molecules
    /// only: the pairing matrix is specific to `γ = 0`.
    pub fn advance(&mut self, dt: f64, noise: &NoisePlan) -> Result<f64> {
        check_dt(dt)?;
        let g = self.v_side.gamma();
        if !g.is_maxwell() {
            return Err(Error::InvalidArgument("the coupled system is defined for Maxwell molecules only".into()));
        }
        let n = self.len();
        let step = self.v_side.step_index();
        let scale = (dt / n as f64).sqrt();
        let v = self.v_side.velocities();
        let w = self.w_side.velocities();
        let (inc, defects) = antisymmetric_sums(n, |i, row: &mut [Both]| {
            let mut xi = vec![Vec3::ZERO; row.len()];
            noise.pair_row(step, i, n, &mut xi);
            let mut d = Vec::with_capacity(row.len());
            for (k, c) in row.iter_mut().enumerate() {
                let j = i + 1 + k;
                let x = v[i] - v[j];
                let y = w[i] - w[j];
                let cv = conservative_pair_term(x, xi[k], g, dt, n, scale);
                let cw = kernel_b(y, g) * (dt / n as f64) + pair_rotation_apply(x, y, xi[k]) * scale;
                *c = Both(cv, cw);
                d.push(alignment_defect(x, y));
            }
            pairwise(&d)
        });
        let aux = self.eps * dt.sqrt();
        let mut next_v = Vec::with_capacity(n);
        let mut next_w = Vec::with_capacity(n);
        for i in 0..n {
            let mut a = v[i] + inc[i].0;
            let mut b = w[i] + inc[i].1;
            if aux > 0.0 {
                a += noise.single(step, NoiseKind::AuxFirst, i) * aux;
                b += noise.single(step, NoiseKind::AuxSecond, i) * aux;
            }
            next_v.push(a);
            next_w.push(b);
        }
        check_blow_up(&next_v, step)?;
        check_blow_up(&next_w, step)?;
        self.v_side.commit(next_v, dt)?;
        self.w_side.commit(next_w, dt)?;
        // unordered pairs counted once above, ordered pairs twice in the sum
        let total = 2.0 * pairwise(&defects);
        Ok(2.0 * dt / (n * n) as f64 * total - 6.0 * self.eps * self.eps * dt)
    }
}

pub fn step_coupled_pair(p: &PairedEnsemble, dt: f64, noise: &NoisePlan) -> Result<(PairedEnsemble, f64)> {
    let mut next = p.clone();
    let pred = next.advance(dt, noise)?;
    Ok((next, pred))
}
