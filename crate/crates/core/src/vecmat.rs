//! Small fixed-size linear algebra for velocities and 3×3 matrices.
//!
//! [`Sym3`] stores only the upper triangle, so symmetry holds by construction.
//! Eigendecompositions use cyclic Jacobi rotations, which keep the rotation
//! orthogonal to working precision even when eigenvalues nearly coincide (the
//! kernel matrices `a(v)` always have a repeated eigenvalue).
//!
//! Tolerances are relative to `1 + trace`, never absolute.

use std::ops::{Add, AddAssign, Div, Index, Mul, Neg, Sub, SubAssign};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default negative-eigenvalue clip used when taking square roots of
/// matrices that are PSD up to rounding.
pub const DEFAULT_CLIP: f64 = 1e-10;

/// Relative threshold below which an eigenvalue is treated as zero.
pub const ZERO_EIGENVALUE_REL: f64 = 1e-12;

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 3]", into = "[f64; 3]")]
pub struct Vec3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl From<[f64; 3]> for Vec3 {
    fn from(a: [f64; 3]) -> Self {
        Vec3::new(a[0], a[1], a[2])
    }
}

impl From<Vec3> for [f64; 3] {
    fn from(v: Vec3) -> Self {
        [v.x, v.y, v.z]
    }
}

impl Vec3 {
    pub const ZERO: Vec3 = Vec3 { x: 0.0, y: 0.0, z: 0.0 };

    #[inline]
    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Vec3 { x, y, z }
    }

    pub fn axis(k: usize) -> Self {
        let mut a = [0.0; 3];
        a[k] = 1.0;
        a.into()
    }

    #[inline]
    pub fn dot(self, o: Vec3) -> f64 {
        self.x * o.x + self.y * o.y + self.z * o.z
    }

    #[inline]
    pub fn norm2(self) -> f64 {
        self.dot(self)
    }

    #[inline]
    pub fn norm(self) -> f64 {
        self.norm2().sqrt()
    }

    pub fn cross(self, o: Vec3) -> Vec3 {
        Vec3::new(
            self.y * o.z - self.z * o.y,
            self.z * o.x - self.x * o.z,
            self.x * o.y - self.y * o.x,
        )
    }

    /// `v vᵀ`
    #[inline]
    pub fn outer(self) -> Sym3 {
        Sym3 {
            xx: self.x * self.x,
            xy: self.x * self.y,
            xz: self.x * self.z,
            yy: self.y * self.y,
            yz: self.y * self.z,
            zz: self.z * self.z,
        }
    }

    /// `u vᵀ` as a general matrix.
    pub fn outer_with(self, o: Vec3) -> Mat3 {
        let a = self.to_array();
        let b = o.to_array();
        let mut m = [[0.0; 3]; 3];
        for (r, row) in m.iter_mut().enumerate() {
            for (c, e) in row.iter_mut().enumerate() {
                *e = a[r] * b[c];
            }
        }
        Mat3 { m }
    }

    pub fn to_array(self) -> [f64; 3] {
        self.into()
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }

    pub fn max_abs(self) -> f64 {
        self.x.abs().max(self.y.abs()).max(self.z.abs())
    }
}

impl Index<usize> for Vec3 {
    type Output = f64;
    fn index(&self, k: usize) -> &f64 {
        match k {
            0 => &self.x,
            1 => &self.y,
            2 => &self.z,
            _ => panic!("Vec3 index {k} out of range"),
        }
    }
}

impl Add for Vec3 {
    type Output = Vec3;
    #[inline]
    fn add(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x + o.x, self.y + o.y, self.z + o.z)
    }
}

impl Sub for Vec3 {
    type Output = Vec3;
    #[inline]
    fn sub(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x - o.x, self.y - o.y, self.z - o.z)
    }
}

impl Neg for Vec3 {
    type Output = Vec3;
    #[inline]
    fn neg(self) -> Vec3 {
        Vec3::new(-self.x, -self.y, -self.z)
    }
}

impl Mul<f64> for Vec3 {
    type Output = Vec3;
    #[inline]
    fn mul(self, s: f64) -> Vec3 {
        Vec3::new(self.x * s, self.y * s, self.z * s)
    }
}

impl Mul<Vec3> for f64 {
    type Output = Vec3;
    #[inline]
    fn mul(self, v: Vec3) -> Vec3 {
        v * self
    }
}

impl Div<f64> for Vec3 {
    type Output = Vec3;
    #[inline]
    fn div(self, s: f64) -> Vec3 {
        Vec3::new(self.x / s, self.y / s, self.z / s)
    }
}

impl AddAssign for Vec3 {
    #[inline]
    fn add_assign(&mut self, o: Vec3) {
        self.x += o.x;
        self.y += o.y;
        self.z += o.z;
    }
}

impl SubAssign for Vec3 {
    #[inline]
    fn sub_assign(&mut self, o: Vec3) {
        self.x -= o.x;
        self.y -= o.y;
        self.z -= o.z;
    }
}

impl std::iter::Sum for Vec3 {
    fn sum<I: Iterator<Item = Vec3>>(iter: I) -> Vec3 {
        iter.fold(Vec3::ZERO, |a, b| a + b)
    }
}

/// Symmetric 3×3 matrix, upper triangle only.
///
/// Serialized as `[xx, xy, xz, yy, yz, zz]`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 6]", into = "[f64; 6]")]
pub struct Sym3 {
    pub xx: f64,
    pub xy: f64,
    pub xz: f64,
    pub yy: f64,
    pub yz: f64,
    pub zz: f64,
}

impl From<[f64; 6]> for Sym3 {
    fn from(a: [f64; 6]) -> Self {
        Sym3 { xx: a[0], xy: a[1], xz: a[2], yy: a[3], yz: a[4], zz: a[5] }
    }
}

impl From<Sym3> for [f64; 6] {
    fn from(s: Sym3) -> Self {
        [s.xx, s.xy, s.xz, s.yy, s.yz, s.zz]
    }
}

impl Sym3 {
    pub const ZERO: Sym3 = Sym3 { xx: 0.0, xy: 0.0, xz: 0.0, yy: 0.0, yz: 0.0, zz: 0.0 };
    pub const IDENTITY: Sym3 = Sym3 { xx: 1.0, xy: 0.0, xz: 0.0, yy: 1.0, yz: 0.0, zz: 1.0 };

    pub fn diag(a: f64, b: f64, c: f64) -> Self {
        Sym3 { xx: a, yy: b, zz: c, ..Sym3::ZERO }
    }

    pub fn scaled_identity(s: f64) -> Self {
        Sym3::diag(s, s, s)
    }

    /// Symmetric part of a general matrix.
    pub fn from_mat_sym_part(m: &Mat3) -> Self {
        let a = &m.m;
        Sym3 {
            xx: a[0][0],
            xy: 0.5 * (a[0][1] + a[1][0]),
            xz: 0.5 * (a[0][2] + a[2][0]),
            yy: a[1][1],
            yz: 0.5 * (a[1][2] + a[2][1]),
            zz: a[2][2],
        }
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        match (r.min(c), r.max(c)) {
            (0, 0) => self.xx,
            (0, 1) => self.xy,
            (0, 2) => self.xz,
            (1, 1) => self.yy,
            (1, 2) => self.yz,
            (2, 2) => self.zz,
            _ => panic!("Sym3 index ({r},{c}) out of range"),
        }
    }

    #[inline]
    pub fn trace(&self) -> f64 {
        self.xx + self.yy + self.zz
    }

    /// `‖S‖² = Tr(S Sᵀ)`
    #[inline]
    pub fn frob2(&self) -> f64 {
        self.xx * self.xx
            + self.yy * self.yy
            + self.zz * self.zz
            + 2.0 * (self.xy * self.xy + self.xz * self.xz + self.yz * self.yz)
    }

    pub fn frob(&self) -> f64 {
        self.frob2().sqrt()
    }

    /// `⟨⟨S, T⟩⟩ = Tr(S T)`
    #[inline]
    pub fn inner(&self, o: &Sym3) -> f64 {
        self.xx * o.xx
            + self.yy * o.yy
            + self.zz * o.zz
            + 2.0 * (self.xy * o.xy + self.xz * o.xz + self.yz * o.yz)
    }

    #[inline]
    pub fn mul_vec(&self, v: Vec3) -> Vec3 {
        Vec3::new(
            self.xx * v.x + self.xy * v.y + self.xz * v.z,
            self.xy * v.x + self.yy * v.y + self.yz * v.z,
            self.xz * v.x + self.yz * v.y + self.zz * v.z,
        )
    }

    pub fn quad(&self, v: Vec3) -> f64 {
        v.dot(self.mul_vec(v))
    }

    pub fn to_mat3(&self) -> Mat3 {
        Mat3 {
            m: [
                [self.xx, self.xy, self.xz],
                [self.xy, self.yy, self.yz],
                [self.xz, self.yz, self.zz],
            ],
        }
    }

    pub fn is_finite(&self) -> bool {
        <[f64; 6]>::from(*self).iter().all(|x| x.is_finite())
    }

    pub fn max_abs(&self) -> f64 {
        <[f64; 6]>::from(*self).iter().fold(0.0, |m, x| m.max(x.abs()))
    }

    /// `S T S` for symmetric `S` and `T`, symmetrized.
    pub fn sandwich(&self, t: &Sym3) -> Sym3 {
        let s = self.to_mat3();
        Sym3::from_mat_sym_part(&s.mul(&t.to_mat3()).mul(&s))
    }
}

impl Add for Sym3 {
    type Output = Sym3;
    #[inline]
    fn add(self, o: Sym3) -> Sym3 {
        Sym3 {
            xx: self.xx + o.xx,
            xy: self.xy + o.xy,
            xz: self.xz + o.xz,
            yy: self.yy + o.yy,
            yz: self.yz + o.yz,
            zz: self.zz + o.zz,
        }
    }
}

impl Sub for Sym3 {
    type Output = Sym3;
    #[inline]
    fn sub(self, o: Sym3) -> Sym3 {
        Sym3 {
            xx: self.xx - o.xx,
            xy: self.xy - o.xy,
            xz: self.xz - o.xz,
            yy: self.yy - o.yy,
            yz: self.yz - o.yz,
            zz: self.zz - o.zz,
        }
    }
}

impl Mul<f64> for Sym3 {
    type Output = Sym3;
    #[inline]
    fn mul(self, s: f64) -> Sym3 {
        Sym3 {
            xx: self.xx * s,
            xy: self.xy * s,
            xz: self.xz * s,
            yy: self.yy * s,
            yz: self.yz * s,
            zz: self.zz * s,
        }
    }
}

impl AddAssign for Sym3 {
    #[inline]
    fn add_assign(&mut self, o: Sym3) {
        *self = *self + o;
    }
}

/// General 3×3 matrix, row-major.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Mat3 {
    pub m: [[f64; 3]; 3],
}

impl Mat3 {
    pub const ZERO: Mat3 = Mat3 { m: [[0.0; 3]; 3] };
    pub const IDENTITY: Mat3 = Mat3 { m: [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]] };

    pub fn from_rows(m: [[f64; 3]; 3]) -> Self {
        Mat3 { m }
    }

    pub fn from_cols(c0: Vec3, c1: Vec3, c2: Vec3) -> Self {
        Mat3 { m: [[c0.x, c1.x, c2.x], [c0.y, c1.y, c2.y], [c0.z, c1.z, c2.z]] }
    }

    pub fn diag(a: f64, b: f64, c: f64) -> Self {
        Sym3::diag(a, b, c).to_mat3()
    }

    pub fn col(&self, c: usize) -> Vec3 {
        Vec3::new(self.m[0][c], self.m[1][c], self.m[2][c])
    }

    pub fn transpose(&self) -> Mat3 {
        let a = &self.m;
        Mat3 { m: [[a[0][0], a[1][0], a[2][0]], [a[0][1], a[1][1], a[2][1]], [a[0][2], a[1][2], a[2][2]]] }
    }

    pub fn mul(&self, o: &Mat3) -> Mat3 {
        let mut r = [[0.0; 3]; 3];
        for (i, row) in r.iter_mut().enumerate() {
            for (j, e) in row.iter_mut().enumerate() {
                *e = self.m[i][0] * o.m[0][j] + self.m[i][1] * o.m[1][j] + self.m[i][2] * o.m[2][j];
            }
        }
        Mat3 { m: r }
    }

    #[inline]
    pub fn mul_vec(&self, v: Vec3) -> Vec3 {
        let a = &self.m;
        Vec3::new(
            a[0][0] * v.x + a[0][1] * v.y + a[0][2] * v.z,
            a[1][0] * v.x + a[1][1] * v.y + a[1][2] * v.z,
            a[2][0] * v.x + a[2][1] * v.y + a[2][2] * v.z,
        )
    }

    /// `vᵀ M`, i.e. `Mᵀ v`.
    pub fn tmul_vec(&self, v: Vec3) -> Vec3 {
        self.transpose().mul_vec(v)
    }

    pub fn add(&self, o: &Mat3) -> Mat3 {
        self.zip(o, |a, b| a + b)
    }

    pub fn sub(&self, o: &Mat3) -> Mat3 {
        self.zip(o, |a, b| a - b)
    }

    pub fn scale(&self, s: f64) -> Mat3 {
        self.zip(&Mat3::ZERO, |a, _| a * s)
    }

    fn zip(&self, o: &Mat3, f: impl Fn(f64, f64) -> f64) -> Mat3 {
        let mut r = [[0.0; 3]; 3];
        for i in 0..3 {
            for j in 0..3 {
                r[i][j] = f(self.m[i][j], o.m[i][j]);
            }
        }
        Mat3 { m: r }
    }

    pub fn trace(&self) -> f64 {
        self.m[0][0] + self.m[1][1] + self.m[2][2]
    }

    /// `⟨⟨A, B⟩⟩ = Tr(A Bᵀ)`
    pub fn inner(&self, o: &Mat3) -> f64 {
        let mut s = 0.0;
        for i in 0..3 {
            for j in 0..3 {
                s += self.m[i][j] * o.m[i][j];
            }
        }
        s
    }

    pub fn frob2(&self) -> f64 {
        self.inner(self)
    }

    pub fn frob(&self) -> f64 {
        self.frob2().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.m.iter().flatten().fold(0.0, |m, x| m.max(x.abs()))
    }

    /// `A Aᵀ`
    pub fn gram(&self) -> Sym3 {
        Sym3::from_mat_sym_part(&self.mul(&self.transpose()))
    }

    pub fn det(&self) -> f64 {
        let a = &self.m;
        a[0][0] * (a[1][1] * a[2][2] - a[1][2] * a[2][1]) - a[0][1] * (a[1][0] * a[2][2] - a[1][2] * a[2][0])
            + a[0][2] * (a[1][0] * a[2][1] - a[1][1] * a[2][0])
    }

    pub fn inverse(&self) -> Option<Mat3> {
        let a = &self.m;
        let det = self.det();
        if det == 0.0 || !det.is_finite() {
            return None;
        }
        let inv = 1.0 / det;
        let c = |r0: usize, r1: usize, c0: usize, c1: usize| a[r0][c0] * a[r1][c1] - a[r0][c1] * a[r1][c0];
        Some(Mat3 {
            m: [
                [c(1, 2, 1, 2) * inv, -c(0, 2, 1, 2) * inv, c(0, 1, 1, 2) * inv],
                [-c(1, 2, 0, 2) * inv, c(0, 2, 0, 2) * inv, -c(0, 1, 0, 2) * inv],
                [c(1, 2, 0, 1) * inv, -c(0, 2, 0, 1) * inv, c(0, 1, 0, 1) * inv],
            ],
        })
    }

    /// `max |AᵀA − I|`
    pub fn orthogonality_error(&self) -> f64 {
        self.transpose().mul(self).sub(&Mat3::IDENTITY).max_abs()
    }

    pub fn is_finite(&self) -> bool {
        self.m.iter().flatten().all(|x| x.is_finite())
    }
}

impl Mul<Mat3> for Sym3 {
    type Output = Mat3;
    fn mul(self, o: Mat3) -> Mat3 {
        self.to_mat3().mul(&o)
    }
}

/// Eigendecomposition of a symmetric matrix.
#[derive(Clone, Copy, Debug)]
pub struct Eigh {
    /// Ascending.
    pub values: [f64; 3],
    /// Columns are the matching unit eigenvectors.
    pub rotation: Mat3,
}

impl Eigh {
    pub fn vector(&self, k: usize) -> Vec3 {
        self.rotation.col(k)
    }

    /// `R diag(f(λ)) Rᵀ`
    pub fn map(&self, f: impl Fn(f64) -> f64) -> Sym3 {
        let mut s = Sym3::ZERO;
        for k in 0..3 {
            s += self.vector(k).outer() * f(self.values[k]);
        }
        s
    }
}

/// Symmetric eigendecomposition by cyclic Jacobi rotations.
pub fn sym3_eigh(s: &Sym3) -> Result<Eigh> {
    if !s.is_finite() {
        return Err(Error::InvalidArgument("non-finite matrix entry".into()));
    }
    let mut a = s.to_mat3().m;
    let mut v = Mat3::IDENTITY.m;
    let scale = s.frob2();
    for _sweep in 0..64 {
        let off = a[0][1] * a[0][1] + a[0][2] * a[0][2] + a[1][2] * a[1][2];
        if off == 0.0 || off <= 1e-36 * scale {
            break;
        }
        for &(p, q) in &[(0usize, 1usize), (0, 2), (1, 2)] {
            let apq = a[p][q];
            if apq == 0.0 {
                continue;
            }
            let theta = (a[q][q] - a[p][p]) / (2.0 * apq);
            let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
            let c = 1.0 / (t * t + 1.0).sqrt();
            let sn = t * c;
            // A <- Jᵀ A J with J the (p,q) plane rotation
            for k in 0..3 {
                let akp = a[k][p];
                let akq = a[k][q];
                a[k][p] = c * akp - sn * akq;
                a[k][q] = sn * akp + c * akq;
            }
            for k in 0..3 {
                let apk = a[p][k];
                let aqk = a[q][k];
                a[p][k] = c * apk - sn * aqk;
                a[q][k] = sn * apk + c * aqk;
            }
            for row in v.iter_mut() {
                let vp = row[p];
                let vq = row[q];
                row[p] = c * vp - sn * vq;
                row[q] = sn * vp + c * vq;
            }
        }
    }
    let mut order = [0usize, 1, 2];
    order.sort_by(|&i, &j| a[i][i].total_cmp(&a[j][j]));
    let values = [a[order[0]][order[0]], a[order[1]][order[1]], a[order[2]][order[2]]];
    let rot = Mat3 { m: v };
    let rotation = Mat3::from_cols(rot.col(order[0]), rot.col(order[1]), rot.col(order[2]));
    Ok(Eigh { values, rotation })
}

fn negative_tolerance(s: &Sym3, clip: f64) -> f64 {
    clip * (1.0 + s.trace().abs())
}

/// PSD square root. Eigenvalues in `[-clip(1+tr S), 0)` are clamped to zero,
/// as are nonnegative ones below the zero-eigenvalue threshold, so that
/// structurally rank-deficient inputs get an exactly rank-deficient root.
pub fn sym3_sqrt(s: &Sym3, clip: f64) -> Result<Sym3> {
    if *s == Sym3::ZERO {
        return Ok(Sym3::ZERO);
    }
    let e = sym3_eigh(s)?;
    let tol = negative_tolerance(s, clip);
    if e.values[0] < -tol {
        return Err(Error::NotPsd { eigenvalue: e.values[0], tolerance: tol });
    }
    let zero = ZERO_EIGENVALUE_REL * (1.0 + s.trace().abs());
    Ok(e.map(|l| if l <= zero { 0.0 } else { l.sqrt() }))
}

/// Inverse square root of a strictly positive definite matrix.
pub fn sym3_inv_sqrt(s: &Sym3) -> Result<Sym3> {
    let e = sym3_eigh(s)?;
    let thr = ZERO_EIGENVALUE_REL * (1.0 + s.trace().abs());
    if e.values[0] <= thr {
        return Err(Error::Singular(format!("smallest eigenvalue {:e} not above {:e}", e.values[0], thr)));
    }
    Ok(e.map(|l| 1.0 / l.sqrt()))
}

/// `B = M^{-1/2} A` in the generalized sense: on `range(M)` the inverse
/// square root is applied, on `ker(M)` `B` acts as the identity.
///
/// With `M = mean(A_j²)` for symmetric PSD `A_j`, the outputs satisfy
/// `M^{1/2} B_j = A_j` and `mean(B_j B_jᵀ) = I`.
pub fn pinv_sqrt_apply(m: &Sym3, a: &Mat3, tol: f64) -> Result<Mat3> {
    let e = sym3_eigh(m)?;
    let thr = ZERO_EIGENVALUE_REL * (1.0 + m.trace().abs());
    let tol_neg = negative_tolerance(m, DEFAULT_CLIP);
    if e.values[0] < -tol_neg {
        return Err(Error::NotPsd { eigenvalue: e.values[0], tolerance: tol_neg });
    }
    let mut pinv = Sym3::ZERO;
    let mut kernel = Sym3::ZERO;
    for k in 0..3 {
        let u = e.vector(k).outer();
        if e.values[k] > thr {
            pinv += u * (1.0 / e.values[k].sqrt());
        } else {
            kernel += u;
        }
    }
    let leak = (kernel * *a).frob();
    let allowed = tol * (1.0 + a.frob());
    if leak > allowed {
        return Err(Error::InconsistentRange { residual: leak, tolerance: allowed });
    }
    Ok((pinv * *a).add(&kernel.to_mat3()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn rand_mat(rng: &mut impl Rng) -> Mat3 {
        let mut m = [[0.0; 3]; 3];
        for e in m.iter_mut().flatten() {
            *e = rng.sample(StandardNormal);
        }
        Mat3 { m }
    }

    fn rand_psd(rng: &mut impl Rng, rank: usize) -> Sym3 {
        let mut s = Sym3::ZERO;
        for _ in 0..rank {
            let v = Vec3::new(rng.sample(StandardNormal), rng.sample(StandardNormal), rng.sample(StandardNormal));
            s += v.outer();
        }
        s
    }

    #[test]
    fn eigh_identity_and_diagonal() {
        let e = sym3_eigh(&Sym3::IDENTITY).unwrap();
        assert_eq!(e.values, [1.0, 1.0, 1.0]);
        assert!(e.rotation.orthogonality_error() < 1e-15);

        let e = sym3_eigh(&Sym3::diag(3.0, 1.0, 2.0)).unwrap();
        assert_eq!(e.values, [1.0, 2.0, 3.0]);
        assert_eq!(e.vector(0).x.abs(), 0.0);
        assert_eq!(e.vector(0).y.abs(), 1.0);
    }

    #[test]
    fn eigh_reconstructs_random_spd() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..2000 {
            let s = rand_psd(&mut rng, 4);
            let e = sym3_eigh(&s).unwrap();
            assert!(e.values[0] <= e.values[1] && e.values[1] <= e.values[2]);
            assert!(e.rotation.orthogonality_error() < 1e-13);
            let back = e.map(|l| l);
            assert!((back - s).max_abs() <= 1e-12 * s.max_abs(), "{:?} vs {:?}", back, s);
        }
    }

    #[test]
    fn eigh_rejects_nan() {
        let s = Sym3 { xy: f64::NAN, ..Sym3::IDENTITY };
        assert!(matches!(sym3_eigh(&s), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn eigh_near_degenerate_spectrum() {
        // rank-2 kernel matrix with a repeated eigenvalue, slightly perturbed
        let v = Vec3::new(0.3, -1.2, 0.7);
        let a = (Sym3::scaled_identity(v.norm2()) - v.outer()) + Sym3 { xy: 1e-14, ..Sym3::ZERO };
        let e = sym3_eigh(&a).unwrap();
        assert!(e.rotation.orthogonality_error() < 1e-14);
        assert!(e.values[0].abs() < 1e-13);
        assert!((e.map(|l| l) - a).max_abs() < 1e-13);
    }

    #[test]
    fn sqrt_examples() {
        assert_eq!(sym3_sqrt(&Sym3::diag(4.0, 9.0, 0.0), DEFAULT_CLIP).unwrap(), Sym3::diag(2.0, 3.0, 0.0));
        assert_eq!(sym3_sqrt(&Sym3::IDENTITY, DEFAULT_CLIP).unwrap(), Sym3::IDENTITY);
    }

    #[test]
    fn sqrt_multiply_back() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for rank in 0..=3 {
            for _ in 0..500 {
                let s = rand_psd(&mut rng, rank);
                let r = sym3_sqrt(&s, DEFAULT_CLIP).unwrap();
                let sq = Sym3::from_mat_sym_part(&r.to_mat3().mul(&r.to_mat3()));
                assert!((sq - s).frob() <= 1e-10 * (1.0 + s.frob()));
                assert!(sym3_eigh(&r).unwrap().values[0] >= -1e-12 * (1.0 + r.trace()));
            }
        }
    }

    #[test]
    fn sqrt_clamps_and_rejects_negative() {
        let s = Sym3::diag(1.0, -1e-14, 2.0);
        let r = sym3_sqrt(&s, DEFAULT_CLIP).unwrap();
        assert_eq!(r.yy, 0.0);
        let bad = Sym3::diag(1.0, -1e-3, 2.0);
        assert!(matches!(sym3_sqrt(&bad, DEFAULT_CLIP), Err(Error::NotPsd { .. })));
    }

    #[test]
    fn pinv_sqrt_examples() {
        let a = rand_mat(&mut ChaCha8Rng::seed_from_u64(3));
        let b = pinv_sqrt_apply(&Sym3::IDENTITY, &a, 1e-9).unwrap();
        assert!(b.sub(&a).max_abs() < 1e-15);

        let b = pinv_sqrt_apply(&Sym3::diag(4.0, 1.0, 0.0), &Mat3::diag(2.0, 1.0, 0.0), 1e-9).unwrap();
        assert!(b.sub(&Mat3::IDENTITY).max_abs() < 1e-15);

        let b = pinv_sqrt_apply(&Sym3::ZERO, &Mat3::ZERO, 1e-9).unwrap();
        assert_eq!(b, Mat3::IDENTITY);
    }

    #[test]
    fn pinv_sqrt_rejects_kernel_component() {
        let err = pinv_sqrt_apply(&Sym3::diag(4.0, 1.0, 0.0), &Mat3::IDENTITY, 1e-9).unwrap_err();
        assert!(matches!(err, Error::InconsistentRange { .. }));
    }

    /// Both factorization properties on families sharing a kernel vector.
    #[test]
    fn pinv_sqrt_factorization_properties() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for trial in 0..300 {
            let kernel_dim = trial % 3; // 0, 1 or 2 common kernel directions
            let q = sym3_eigh(&rand_psd(&mut rng, 3)).unwrap().rotation;
            let k = 2 + trial % 7;
            let mats: Vec<Sym3> = (0..k)
                .map(|_| {
                    let mut s = Sym3::ZERO;
                    for _ in 0..3 {
                        let mut u = Vec3::ZERO;
                        for d in kernel_dim..3 {
                            let w: f64 = rng.sample(StandardNormal);
                            u += q.col(d) * w;
                        }
                        s += u.outer();
                    }
                    s
                })
                .collect();
            let mut m = Sym3::ZERO;
            for a in &mats {
                m += Sym3::from_mat_sym_part(&a.to_mat3().mul(&a.to_mat3())) * (1.0 / k as f64);
            }
            let root = sym3_sqrt(&m, DEFAULT_CLIP).unwrap();
            let mut gram = Sym3::ZERO;
            for a in &mats {
                let b = pinv_sqrt_apply(&m, &a.to_mat3(), 1e-8).unwrap();
                let back = (root * b).sub(&a.to_mat3()).max_abs();
                assert!(back <= 1e-8 * (1.0 + a.max_abs()), "trial {trial}: {back:e}");
                gram += b.gram() * (1.0 / k as f64);
            }
            assert!((gram - Sym3::IDENTITY).max_abs() < 1e-8, "trial {trial}: {:?}", gram);
        }
    }

    fn sqrt_holder_ratio(a: &Sym3, b: &Sym3) -> f64 {
        let ra = sym3_sqrt(a, DEFAULT_CLIP).unwrap();
        let rb = sym3_sqrt(b, DEFAULT_CLIP).unwrap();
        (ra - rb).frob() / (*a - *b).frob().sqrt()
    }

    /// Square-root Hölder bound on PSD pairs: finite worst ratio, invariant
    /// under joint rescaling.
    #[test]
    fn sqrt_holder_bound() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let pairs: Vec<(Sym3, Sym3)> = (0..10_000)
            .map(|k| {
                let a = rand_psd(&mut rng, 1 + k % 3);
                let b = if k % 2 == 0 { rand_psd(&mut rng, 1 + (k / 2) % 3) } else { a + rand_psd(&mut rng, 1) * 1e-4 };
                (a, b)
            })
            .collect();
        let worst = |lambda: f64| {
            pairs.iter().map(|(a, b)| sqrt_holder_ratio(&(*a * lambda), &(*b * lambda))).fold(0.0, f64::max)
        };
        let c1 = worst(1.0);
        assert!(c1.is_finite() && c1 > 0.0);
        for lambda in [1e-2, 1e2] {
            let c = worst(lambda);
            assert!((c / c1 - 1.0).abs() < 0.05, "scale {lambda}: {c} vs {c1}");
        }
    }

    /// Lipschitz bound on strictly PD pairs, weighted by the smaller inverse norm.
    #[test]
    fn sqrt_lipschitz_bound_pd() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut worst = 0.0f64;
        for k in 0..10_000 {
            let a = rand_psd(&mut rng, 3) + Sym3::scaled_identity(1e-3 * (1 + k % 10) as f64);
            let b = a + rand_psd(&mut rng, 2) * (0.5 / (1 + k % 50) as f64);
            let inv_norm = |s: &Sym3| 1.0 / sym3_eigh(s).unwrap().values[0];
            let weight = inv_norm(&a).min(inv_norm(&b)).sqrt();
            let ra = sym3_sqrt(&a, DEFAULT_CLIP).unwrap();
            let rb = sym3_sqrt(&b, DEFAULT_CLIP).unwrap();
            let ratio = (ra - rb).frob() / (weight * (a - b).frob());
            assert!(ratio.is_finite());
            worst = worst.max(ratio);
        }
        assert!(worst < 10.0, "{worst}");
    }

    #[test]
    fn inverse_roundtrip() {
        let a = rand_mat(&mut ChaCha8Rng::seed_from_u64(5));
        let inv = a.inverse().unwrap();
        assert!(a.mul(&inv).sub(&Mat3::IDENTITY).max_abs() < 1e-12);
        assert!(Mat3::ZERO.inverse().is_none());
    }
}
