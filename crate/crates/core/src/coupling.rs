//! Gaussian optimal rotations, the explicit pairing matrix for Maxwell
//! molecules, and functionals evaluated on empirical couplings.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::{field_a, field_b, EmpiricalMeasure, Gamma};
use crate::sum::pairwise;
use crate::vecmat::{sym3_eigh, sym3_sqrt, Mat3, Sym3, Vec3, DEFAULT_CLIP, ZERO_EIGENVALUE_REL};

/// `N` paired atoms `(v_i, w_i)` with uniform weights.
#[derive(Clone, Debug, PartialEq)]
pub struct EmpiricalCoupling {
    pairs: Vec<(Vec3, Vec3)>,
}

impl EmpiricalCoupling {
    pub fn new(pairs: Vec<(Vec3, Vec3)>) -> Result<Self> {
        if pairs.is_empty() {
            return Err(Error::InvalidArgument("coupling needs at least one pair".into()));
        }
        if let Some(i) = pairs.iter().position(|(v, w)| !v.is_finite() || !w.is_finite()) {
            return Err(Error::InvalidArgument(format!("pair {i} is not finite")));
        }
        Ok(EmpiricalCoupling { pairs })
    }

    /// Pairs `v[i]` with `w[i]`.
    pub fn zip(v: &[Vec3], w: &[Vec3]) -> Result<Self> {
        if v.len() != w.len() {
            return Err(Error::SizeMismatch { left: v.len(), right: w.len() });
        }
        Self::new(v.iter().copied().zip(w.iter().copied()).collect())
    }

    /// The coupling `w_i = v_i`.
    pub fn diagonal(mu: &EmpiricalMeasure) -> Self {
        EmpiricalCoupling { pairs: mu.atoms().iter().map(|&v| (v, v)).collect() }
    }

    pub fn pairs(&self) -> &[(Vec3, Vec3)] {
        &self.pairs
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn first_marginal(&self) -> EmpiricalMeasure {
        EmpiricalMeasure::new(self.pairs.iter().map(|p| p.0).collect()).expect("coupling invariants")
    }

    pub fn second_marginal(&self) -> EmpiricalMeasure {
        EmpiricalMeasure::new(self.pairs.iter().map(|p| p.1).collect()).expect("coupling invariants")
    }

    /// `N⁻¹ Σ |v_i − w_i|²`
    pub fn mean_sq_distance(&self) -> f64 {
        self.pairs.iter().map(|(v, w)| (*v - *w).norm2()).sum::<f64>() / self.len() as f64
    }
}

fn strictly_pd_sqrt(s: &Sym3, name: &str) -> Result<Sym3> {
    let e = sym3_eigh(s)?;
    let thr = ZERO_EIGENVALUE_REL * (1.0 + s.trace().abs());
    if e.values[0] <= thr {
        return Err(Error::Singular(format!(
            "{name} is not positive definite: smallest eigenvalue {:e} not above {thr:e}",
            e.values[0]
        )));
    }
    Ok(e.map(f64::sqrt))
}

/// Orthogonal factor `Q` of the polar decomposition `M = Q H` of a
/// nonsingular matrix, by scaled Newton iteration.
pub fn polar_factor(m: &Mat3) -> Result<Mat3> {
    let mut x = *m;
    let mut scaled = true;
    for _ in 0..100 {
        let inv = x
            .inverse()
            .ok_or_else(|| Error::Singular("polar decomposition of a singular matrix".into()))?;
        let zeta = if scaled { (inv.frob() / x.frob()).sqrt() } else { 1.0 };
        let next = x.scale(0.5 * zeta).add(&inv.transpose().scale(0.5 / zeta));
        let change = next.sub(&x).frob();
        x = next;
        if change <= 1e-3 {
            scaled = false;
        }
        if change <= 4.0 * f64::EPSILON {
            break;
        }
    }
    if !x.is_finite() {
        return Err(Error::Singular("polar iteration diverged".into()));
    }
    Ok(x)
}

/// `U(Σ₁, Σ₂) = Σ₂^{-1/2} Σ₁^{-1/2} (Σ₁^{1/2} Σ₂ Σ₁^{1/2})^{1/2}`.
///
/// `U` is the orthogonal factor of `Σ₂^{1/2} Σ₁^{1/2}`, which is how it is
/// computed; it maximizes `Tr(Σ₁^{1/2} Uᵀ Σ₂^{1/2})` over orthogonal matrices.
pub fn gs_rotation(sigma1: &Sym3, sigma2: &Sym3) -> Result<Mat3> {
    let r1 = strictly_pd_sqrt(sigma1, "first covariance")?;
    let r2 = strictly_pd_sqrt(sigma2, "second covariance")?;
    polar_factor(&(r2 * r1.to_mat3()))
}

/// `U(Σ₁ + εI, Σ₂ + εI)`
pub fn gs_rotation_eps(sigma1: &Sym3, sigma2: &Sym3, eps: f64) -> Result<Mat3> {
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(Error::InvalidArgument(format!("regularization must be positive, got {eps}")));
    }
    let shift = Sym3::scaled_identity(eps);
    let r1 = sym3_sqrt(&(*sigma1 + shift), DEFAULT_CLIP)?;
    let r2 = sym3_sqrt(&(*sigma2 + shift), DEFAULT_CLIP)?;
    polar_factor(&(r2 * r1.to_mat3()))
}

/// Squared W2 distance between centered Gaussians:
/// `tr Σ₁ + tr Σ₂ − 2 tr (Σ₁^{1/2} Σ₂ Σ₁^{1/2})^{1/2}`, clamped at 0.
pub fn gaussian_w2_cost(sigma1: &Sym3, sigma2: &Sym3) -> Result<f64> {
    let r1 = sym3_sqrt(sigma1, DEFAULT_CLIP)?;
    let cross = sym3_sqrt(&r1.sandwich(sigma2), DEFAULT_CLIP)?;
    Ok((sigma1.trace() + sigma2.trace() - 2.0 * cross.trace()).max(0.0))
}

/// `(x, y)` or `(−x, −y)`, whichever has the first nonzero component of `x`
/// positive.
#[inline]
fn canonical(x: Vec3, y: Vec3) -> (Vec3, Vec3) {
    let lead = if x.x != 0.0 {
        x.x
    } else if x.y != 0.0 {
        x.y
    } else {
        x.z
    };
    if lead < 0.0 {
        (-x, -y)
    } else {
        (x, y)
    }
}

/// Orthonormal frame for the pairing matrix, `e₁ ∥ x` and `y ∈ span(e₁, e₂)`.
#[inline]
fn pairing_frame(x: Vec3, y: Vec3) -> (Vec3, Vec3, Vec3) {
    let e1 = x / x.norm();
    let along = y.dot(e1);
    let resid = y - e1 * along;
    // second Gram–Schmidt pass: when y is nearly parallel to x the first
    // residual carries rounding of relative size |y|/|resid|
    let resid = resid - e1 * resid.dot(e1);
    let rn = resid.norm();
    let e2 = if rn > 1e-12 * y.norm() && rn > 0.0 {
        resid / rn
    } else {
        let k = (0..3)
            .min_by(|&a, &b| e1[a].abs().total_cmp(&e1[b].abs()))
            .expect("three axes");
        let axis = Vec3::axis(k);
        let g = axis - e1 * axis.dot(e1);
        g / g.norm()
    };
    (e1, e2, e1.cross(e2))
}

/// Pairing matrix for Maxwell molecules:
/// `A(x, y) = −(y·e₂) e₁e₂ᵀ + (y·e₁) e₂e₂ᵀ + |y| e₃e₃ᵀ`, with `A(0, y) = σ(y)`.
///
/// Satisfies `A Aᵀ = a(y)`, `Tr(σ(x) Aᵀ) = |x||y| + x·y`,
/// `(σ(x) − Aᵀ)(x − y) = 0`, and `A(−x, −y) = A(x, y)` exactly.
pub fn pair_rotation(x: Vec3, y: Vec3) -> Mat3 {
    let (x, y) = canonical(x, y);
    if x == Vec3::ZERO {
        return crate::kernels::kernel_sigma(y, Gamma::MAXWELL).to_mat3();
    }
    let (e1, e2, e3) = pairing_frame(x, y);
    let u = e2 * y.dot(e1) - e1 * y.dot(e2);
    u.outer_with(e2).add(&e3.outer().to_mat3().scale(y.norm()))
}

/// `A(x, y) ξ` without forming the matrix.
#[inline]
pub fn pair_rotation_apply(x: Vec3, y: Vec3, xi: Vec3) -> Vec3 {
    let (x, y) = canonical(x, y);
    if x == Vec3::ZERO {
        return crate::kernels::kernel_sigma(y, Gamma::MAXWELL).mul_vec(xi);
    }
    let (e1, e2, e3) = pairing_frame(x, y);
    let u = e2 * y.dot(e1) - e1 * y.dot(e2);
    u * e2.dot(xi) + e3 * (y.norm() * e3.dot(xi))
}

/// Which point the second field matrix inside `U_ε` is evaluated at.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RotationArgument {
    /// `U_ε(a(f, v), a(g, w))`
    #[default]
    Paired,
    /// `U_ε(a(f, v), a(g, v))`
    SameVelocity,
}

/// Per-atom terms of [`gamma_eps`]: (diffusion mismatch, drift term).
pub fn gamma_eps_terms(
    coupling: &EmpiricalCoupling,
    gamma: Gamma,
    eps: f64,
    argument: RotationArgument,
) -> Result<Vec<(f64, f64)>> {
    if !(eps >= 0.0 && eps.is_finite()) {
        return Err(Error::InvalidArgument(format!("regularization must be nonnegative, got {eps}")));
    }
    let f = coupling.first_marginal();
    let g = coupling.second_marginal();
    coupling
        .pairs()
        .iter()
        .map(|&(v, w)| {
            let af = field_a(&f, v, gamma);
            let ag = field_a(&g, w, gamma);
            let ag_rot = match argument {
                RotationArgument::Paired => ag,
                RotationArgument::SameVelocity => field_a(&g, v, gamma),
            };
            let u = if eps > 0.0 { gs_rotation_eps(&af, &ag_rot, eps)? } else { gs_rotation(&af, &ag_rot)? };
            let rf = sym3_sqrt(&af, DEFAULT_CLIP)?;
            let rg = sym3_sqrt(&ag, DEFAULT_CLIP)?;
            let diffusion = rf.to_mat3().sub(&(rg * u)).frob2();
            let drift = 2.0 * (v - w).dot(field_b(&f, v, gamma) - field_b(&g, w, gamma));
            Ok((diffusion, drift))
        })
        .collect()
}

/// `Γ_ε(R) = N⁻¹ Σ_k ‖a^{1/2}(f,v_k) − a^{1/2}(g,w_k) U_ε‖² + 2(v_k−w_k)·(b(f,v_k) − b(g,w_k))`
/// with `f`, `g` the two marginals of `R`. `ε = 0` uses the unregularized
/// rotation and requires positive definite field matrices.
pub fn gamma_eps(coupling: &EmpiricalCoupling, gamma: Gamma, eps: f64, argument: RotationArgument) -> Result<f64> {
    let terms = gamma_eps_terms(coupling, gamma, eps, argument)?;
    let per_atom: Vec<f64> = terms.iter().map(|(d, b)| d + b).collect();
    Ok(pairwise(&per_atom) / coupling.len() as f64)
}

/// `|a||b| − a·b`, evaluated as `| |b|a − |a|b |² / (2|a||b|)` so that it is
/// exactly zero for `a = b` and never negative.
#[inline]
pub fn alignment_defect(a: Vec3, b: Vec3) -> f64 {
    let na = a.norm();
    let nb = b.norm();
    let p = na * nb;
    if p == 0.0 {
        return 0.0;
    }
    0.5 * (a * nb - b * na).norm2() / p
}

/// `D(R) = N⁻² Σ_{k,l} [|v_k − v_l||w_k − w_l| − (v_k − v_l)·(w_k − w_l)]`, nonnegative.
///
/// Row sums run in parallel, each in ascending column order, and are then
/// reduced pairwise, so the value does not depend on the thread count.
pub fn rousset_d(coupling: &EmpiricalCoupling) -> f64 {
    let pairs = coupling.pairs();
    let rows: Vec<f64> = pairs
        .par_iter()
        .map(|&(vk, wk)| {
            let mut s = 0.0;
            for &(vl, wl) in pairs {
                s += alignment_defect(vk - vl, wk - wl);
            }
            s
        })
        .collect();
    let n = pairs.len() as f64;
    pairwise(&rows) / (n * n)
}
