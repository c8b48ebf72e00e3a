//! Landau collision kernel, its averages against an empirical measure, and
//! moment functionals.
//!
//! With `Π(v) = I − v vᵀ/|v|²`:
//!
//! * `a(v) = |v|^{2+γ} Π(v)`
//! * `b(v) = −2 |v|^γ v`
//! * `σ(v) = |v|^{1+γ/2} Π(v)`, the PSD square root of `a(v)`
//!
//! All three vanish at `v = 0`. They are evaluated as fused products
//! (`|v|^γ (|v|² I − v vᵀ)` etc.) so the `0⁰` ambiguity at `γ = 0` never
//! reaches the output.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::vecmat::{sym3_sqrt, Sym3, Vec3, DEFAULT_CLIP};

/// Kernel exponent, restricted to `[0, 1]`.
#[derive(Clone, Copy, Debug, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct Gamma(f64);

impl Gamma {
    /// Maxwell molecules.
    pub const MAXWELL: Gamma = Gamma(0.0);
    pub const ONE: Gamma = Gamma(1.0);

    pub fn new(value: f64) -> Result<Self> {
        if (0.0..=1.0).contains(&value) {
            Ok(Gamma(value))
        } else {
            Err(Error::InvalidArgument(format!("gamma must lie in [0, 1], got {value}")))
        }
    }

    pub fn value(self) -> f64 {
        self.0
    }

    pub fn is_maxwell(self) -> bool {
        self.0 == 0.0
    }

    /// `r^γ` for `r = |v|`, with `0^0 = 1`.
    #[inline]
    pub fn pow(self, r: f64) -> f64 {
        if self.0 == 0.0 {
            1.0
        } else if self.0 == 1.0 {
            r
        } else {
            r.powf(self.0)
        }
    }

    /// `r^{γ/2}`.
    #[inline]
    pub fn half_pow(self, r: f64) -> f64 {
        if self.0 == 0.0 {
            1.0
        } else if self.0 == 1.0 {
            r.sqrt()
        } else {
            r.powf(0.5 * self.0)
        }
    }
}

impl TryFrom<f64> for Gamma {
    type Error = Error;
    fn try_from(v: f64) -> Result<Self> {
        Gamma::new(v)
    }
}

impl From<Gamma> for f64 {
    fn from(g: Gamma) -> f64 {
        g.0
    }
}

/// Uniformly weighted atoms.
#[derive(Clone, Debug, PartialEq)]
pub struct EmpiricalMeasure {
    atoms: Vec<Vec3>,
}

impl EmpiricalMeasure {
    pub fn new(atoms: Vec<Vec3>) -> Result<Self> {
        if atoms.is_empty() {
            return Err(Error::InvalidArgument("empirical measure needs at least one atom".into()));
        }
        if let Some(i) = atoms.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(format!("atom {i} is not finite")));
        }
        Ok(EmpiricalMeasure { atoms })
    }

    pub fn atoms(&self) -> &[Vec3] {
        &self.atoms
    }

    pub fn into_atoms(self) -> Vec<Vec3> {
        self.atoms
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn mean(&self) -> Vec3 {
        self.atoms.iter().copied().sum::<Vec3>() / self.len() as f64
    }
}

/// A `C²` test function with its derivatives supplied in closed form.
pub trait TestFunction: Send + Sync {
    fn value(&self, v: Vec3) -> f64;
    fn gradient(&self, v: Vec3) -> Vec3;
    fn hessian(&self, v: Vec3) -> Sym3;
}

/// `φ(v) = v · e`
#[derive(Clone, Copy, Debug)]
pub struct Linear(pub Vec3);

impl TestFunction for Linear {
    fn value(&self, v: Vec3) -> f64 {
        v.dot(self.0)
    }
    fn gradient(&self, _v: Vec3) -> Vec3 {
        self.0
    }
    fn hessian(&self, _v: Vec3) -> Sym3 {
        Sym3::ZERO
    }
}

/// `φ(v) = |v|²`
#[derive(Clone, Copy, Debug)]
pub struct SquaredNorm;

impl TestFunction for SquaredNorm {
    fn value(&self, v: Vec3) -> f64 {
        v.norm2()
    }
    fn gradient(&self, v: Vec3) -> Vec3 {
        v * 2.0
    }
    fn hessian(&self, _v: Vec3) -> Sym3 {
        Sym3::scaled_identity(2.0)
    }
}

/// `φ(v) = v_k v_l`
#[derive(Clone, Copy, Debug)]
pub struct CoordProduct {
    pub k: usize,
    pub l: usize,
}

impl TestFunction for CoordProduct {
    fn value(&self, v: Vec3) -> f64 {
        v[self.k] * v[self.l]
    }
    fn gradient(&self, v: Vec3) -> Vec3 {
        let mut g = [0.0; 3];
        g[self.k] += v[self.l];
        g[self.l] += v[self.k];
        g.into()
    }
    fn hessian(&self, _v: Vec3) -> Sym3 {
        let mut h = Sym3::ZERO;
        let (r, c) = (self.k.min(self.l), self.k.max(self.l));
        let bump = if r == c { 2.0 } else { 1.0 };
        match (r, c) {
            (0, 0) => h.xx = bump,
            (0, 1) => h.xy = bump,
            (0, 2) => h.xz = bump,
            (1, 1) => h.yy = bump,
            (1, 2) => h.yz = bump,
            (2, 2) => h.zz = bump,
            _ => panic!("coordinate index out of range"),
        }
        h
    }
}

/// Smooth compactly supported bump `exp(−1/(1 − |v−c|²/R²))` inside the
/// ball, zero outside.
#[derive(Clone, Copy, Debug)]
pub struct Bump {
    pub center: Vec3,
    pub radius: f64,
}

impl Bump {
    // s = |v-c|²/R², φ = exp(-1/(1-s)) = exp(h(s))
    fn parts(&self, v: Vec3) -> Option<(Vec3, f64, f64, f64)> {
        let d = v - self.center;
        let r2 = self.radius * self.radius;
        let s = d.norm2() / r2;
        if s >= 1.0 {
            return None;
        }
        let u = 1.0 - s;
        let phi = (-1.0 / u).exp();
        // dφ/ds = -φ/u², d²φ/ds² = φ(1 - 2u)/u⁴
        let d1 = -phi / (u * u);
        let d2 = phi * (1.0 - 2.0 * u) / (u * u * u * u);
        Some((d, r2, d1, d2))
    }
}

impl TestFunction for Bump {
    fn value(&self, v: Vec3) -> f64 {
        let s = (v - self.center).norm2() / (self.radius * self.radius);
        if s >= 1.0 {
            0.0
        } else {
            (-1.0 / (1.0 - s)).exp()
        }
    }
    fn gradient(&self, v: Vec3) -> Vec3 {
        match self.parts(v) {
            None => Vec3::ZERO,
            Some((d, r2, d1, _)) => d * (2.0 * d1 / r2),
        }
    }
    fn hessian(&self, v: Vec3) -> Sym3 {
        match self.parts(v) {
            None => Sym3::ZERO,
            Some((d, r2, d1, d2)) => {
                Sym3::scaled_identity(2.0 * d1 / r2) + d.outer() * (4.0 * d2 / (r2 * r2))
            }
        }
    }
}

/// `I − v vᵀ / |v|²`
pub fn proj_perp(v: Vec3) -> Result<Sym3> {
    let r2 = v.norm2();
    if r2.sqrt() <= 1e-300 {
        return Err(Error::Singular("projection onto the orthogonal of the zero vector".into()));
    }
    Ok(Sym3::IDENTITY - v.outer() * (1.0 / r2))
}

#[inline]
fn unnormalized_perp(v: Vec3, r2: f64) -> Sym3 {
    Sym3 {
        xx: r2 - v.x * v.x,
        xy: -v.x * v.y,
        xz: -v.x * v.z,
        yy: r2 - v.y * v.y,
        yz: -v.y * v.z,
        zz: r2 - v.z * v.z,
    }
}

/// `a(v) = |v|^γ (|v|² I − v vᵀ)`
#[inline]
pub fn kernel_a(v: Vec3, gamma: Gamma) -> Sym3 {
    let r2 = v.norm2();
    if r2 == 0.0 {
        return Sym3::ZERO;
    }
    let p = unnormalized_perp(v, r2);
    if gamma.is_maxwell() {
        p
    } else {
        p * gamma.pow(r2.sqrt())
    }
}

/// `b(v) = −2 |v|^γ v`
#[inline]
pub fn kernel_b(v: Vec3, gamma: Gamma) -> Vec3 {
    if gamma.is_maxwell() {
        v * -2.0
    } else {
        v * (-2.0 * gamma.pow(v.norm()))
    }
}

/// `σ(v) = |v|^{γ/2} (|v|² I − v vᵀ) / |v|`
#[inline]
pub fn kernel_sigma(v: Vec3, gamma: Gamma) -> Sym3 {
    let r2 = v.norm2();
    if r2 == 0.0 {
        return Sym3::ZERO;
    }
    let r = r2.sqrt();
    unnormalized_perp(v, r2) * (gamma.half_pow(r) / r)
}

/// `σ(v) ξ` without forming the matrix.
#[inline]
pub fn sigma_apply(v: Vec3, xi: Vec3, gamma: Gamma) -> Vec3 {
    let r2 = v.norm2();
    if r2 == 0.0 {
        return Vec3::ZERO;
    }
    let r = r2.sqrt();
    (xi * r2 - v * v.dot(xi)) * (gamma.half_pow(r) / r)
}

/// `b(μ, v) = N⁻¹ Σ_j b(v − v_j)`
pub fn field_b(mu: &EmpiricalMeasure, v: Vec3, gamma: Gamma) -> Vec3 {
    let s: Vec3 = mu.atoms.iter().map(|&w| kernel_b(v - w, gamma)).sum();
    s / mu.len() as f64
}

/// `a(μ, v) = N⁻¹ Σ_j a(v − v_j)`
pub fn field_a(mu: &EmpiricalMeasure, v: Vec3, gamma: Gamma) -> Sym3 {
    let mut s = Sym3::ZERO;
    for &w in &mu.atoms {
        s += kernel_a(v - w, gamma);
    }
    s * (1.0 / mu.len() as f64)
}

/// `[a(μ, v)]^{1/2}`; the square root of the average, not the average of
/// square roots.
pub fn field_a_sqrt(mu: &EmpiricalMeasure, v: Vec3, gamma: Gamma) -> Result<Sym3> {
    sym3_sqrt(&field_a(mu, v, gamma), DEFAULT_CLIP)
}

/// `Lφ(v, v*) = ½ Σ a_kl(v−v*) ∂²_kl φ(v) + Σ b_k(v−v*) ∂_k φ(v)`
pub fn weak_generator(phi: &dyn TestFunction, v: Vec3, v_star: Vec3, gamma: Gamma) -> f64 {
    let z = v - v_star;
    0.5 * kernel_a(z, gamma).inner(&phi.hessian(v)) + kernel_b(z, gamma).dot(phi.gradient(v))
}

/// `N⁻² Σ_{i,j} Lφ(v_i, v_j)`, summed row by row in index order.
pub fn mean_generator(phi: &dyn TestFunction, mu: &EmpiricalMeasure, gamma: Gamma) -> f64 {
    let atoms = mu.atoms();
    let n = atoms.len() as f64;
    let mut total = 0.0;
    for &v in atoms {
        let grad = phi.gradient(v);
        let hess = phi.hessian(v);
        let mut row = 0.0;
        for &w in atoms {
            let z = v - w;
            row += 0.5 * kernel_a(z, gamma).inner(&hess) + kernel_b(z, gamma).dot(grad);
        }
        total += row;
    }
    total / (n * n)
}

/// `N⁻¹ Σ φ(v_i)`
pub fn integrate(phi: &dyn TestFunction, mu: &EmpiricalMeasure) -> f64 {
    mu.atoms.iter().map(|&v| phi.value(v)).sum::<f64>() / mu.len() as f64
}

/// `m_q(μ) = N⁻¹ Σ |v_i|^q`
pub fn moment(mu: &EmpiricalMeasure, q: f64) -> f64 {
    let s: f64 = if q == 2.0 {
        mu.atoms.iter().map(|v| v.norm2()).sum()
    } else if q == 4.0 {
        mu.atoms.iter().map(|v| v.norm2() * v.norm2()).sum()
    } else if q == 6.0 {
        mu.atoms.iter().map(|v| v.norm2().powi(3)).sum()
    } else {
        mu.atoms.iter().map(|v| v.norm().powf(q)).sum()
    };
    s / mu.len() as f64
}

/// Empirical exponential moment with saturation flag.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExpMoment {
    pub value: f64,
    /// Some exponent exceeded the clamp; `value` is then `+∞`.
    pub saturated: bool,
}

/// Exponent clamp for [`exp_moment`].
pub const EXP_CLAMP: f64 = 700.0;

/// `ℰ_α(μ) = N⁻¹ Σ exp(|v_i|^α)`
pub fn exp_moment(mu: &EmpiricalMeasure, alpha: f64) -> Result<ExpMoment> {
    if !(alpha > 0.0 && alpha < 2.0) {
        return Err(Error::InvalidArgument(format!("exponential moment order must lie in (0, 2), got {alpha}")));
    }
    let mut s = 0.0;
    for v in &mu.atoms {
        let e = v.norm().powf(alpha);
        if e > EXP_CLAMP {
            return Ok(ExpMoment { value: f64::INFINITY, saturated: true });
        }
        s += e.exp();
    }
    Ok(ExpMoment { value: s / mu.len() as f64, saturated: false })
}

/// `N⁻¹ Σ (v_i − m)(v_i − m)ᵀ`
pub fn centered_cov(mu: &EmpiricalMeasure) -> Sym3 {
    let m = mu.mean();
    let mut s = Sym3::ZERO;
    for &v in &mu.atoms {
        s += (v - m).outer();
    }
    s * (1.0 / mu.len() as f64)
}

/// `N⁻¹ Σ v_i v_iᵀ`
pub fn second_moment_matrix(mu: &EmpiricalMeasure) -> Sym3 {
    let mut s = Sym3::ZERO;
    for &v in &mu.atoms {
        s += v.outer();
    }
    s * (1.0 / mu.len() as f64)
}
