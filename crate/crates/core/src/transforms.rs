//! Projective transformations of 3D space induced by linear changes of ray
//! coordinates.
//!
//! Re-spacing the planes, offsetting rays, or scaling ray coordinates maps
//! every reconstructed point through a fixed 4×4 matrix. These constructors
//! build those matrices explicitly so they compose and invert as ordinary
//! matrices.

use std::ops::Mul;

use nalgebra::Matrix4;
use serde::{Deserialize, Serialize};

use crate::camera::Intrinsics;
use crate::error::{Error, Result};
use crate::geometry::{Point3, Ray};

const MIN_DET: f64 = 1e-12;
const TOL_ASPECT: f64 = 1e-9;

/// A 4×4 projective transformation acting on homogeneous points.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProjTransform4(Matrix4<f64>);

impl ProjTransform4 {
    pub fn identity() -> Self {
        ProjTransform4(Matrix4::identity())
    }

    pub fn from_matrix(m: Matrix4<f64>) -> Result<Self> {
        if !(m.determinant().abs() > MIN_DET) {
            return Err(Error::RankDeficient { what: "projective transform", ratio: 0.0 });
        }
        Ok(ProjTransform4(m))
    }

    pub fn matrix(&self) -> &Matrix4<f64> {
        &self.0
    }

    pub fn apply(&self, p: &Point3) -> Point3 {
        let h = self.0 * p.to_homogeneous();
        Point3::new(h[0] / h[3], h[1] / h[3], h[2] / h[3])
    }

    pub fn inverse(&self) -> Self {
        // constructors guarantee |det| > MIN_DET
        ProjTransform4(self.0.try_inverse().expect("invertible by construction"))
    }
}

impl Mul for ProjTransform4 {
    type Output = ProjTransform4;

    fn mul(self, rhs: ProjTransform4) -> ProjTransform4 {
        ProjTransform4(self.0 * rhs.0)
    }
}

/// Additive offsets `(s₀, t₀, x₀, y₀)` on ray coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RayOffset {
    pub s0: f64,
    pub t0: f64,
    pub x0: f64,
    pub y0: f64,
}

impl RayOffset {
    pub fn new(s0: f64, t0: f64, x0: f64, y0: f64) -> Self {
        RayOffset { s0, t0, x0, y0 }
    }

    pub fn apply(&self, r: &Ray) -> Ray {
        Ray { s: r.s + self.s0, t: r.t + self.t0, x: r.x + self.x0, y: r.y + self.y0, f: r.f }
    }
}

/// Multiplicative factors `(k_s, k_t, k_x, k_y)` on ray coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RayScale {
    pub ks: f64,
    pub kt: f64,
    pub kx: f64,
    pub ky: f64,
}

impl RayScale {
    pub fn new(ks: f64, kt: f64, kx: f64, ky: f64) -> Result<Self> {
        let k = RayScale { ks, kt, kx, ky };
        if [ks, kt, kx, ky].iter().any(|v| *v == 0.0 || !v.is_finite()) {
            return Err(Error::InvalidIntrinsics(format!("scale factors must be nonzero: {k:?}")));
        }
        Ok(k)
    }

    pub fn apply(&self, r: &Ray) -> Ray {
        Ray { s: r.s * self.ks, t: r.t * self.kt, x: r.x * self.kx, y: r.y * self.ky, f: r.f }
    }
}

/// Changing the plane spacing from `f` to `f_new`.
pub fn p1_respace(f: f64, f_new: f64) -> Result<ProjTransform4> {
    if !(f > 0.0 && f_new > 0.0 && f.is_finite() && f_new.is_finite()) {
        return Err(Error::InvalidSpacing(f, f_new));
    }
    ProjTransform4::from_matrix(Matrix4::from_diagonal(&[1.0, 1.0, f_new / f, 1.0].into()))
}

/// Offsetting rays by `m` on planes with spacing `f`.
pub fn p2_offset(m: &RayOffset, f: f64) -> Result<ProjTransform4> {
    if !(f > 0.0 && f.is_finite()) {
        return Err(Error::InvalidSpacing(f, f));
    }
    let mut p = Matrix4::identity();
    p[(0, 2)] = m.x0 / f;
    p[(1, 2)] = m.y0 / f;
    p[(0, 3)] = m.s0;
    p[(1, 3)] = m.t0;
    ProjTransform4::from_matrix(p)
}

/// Scaling ray coordinates by `k`; only defined when `k_s/k_t = k_x/k_y`.
pub fn p3_scale(k: &RayScale) -> Result<ProjTransform4> {
    let lhs = k.ks / k.kt;
    let rhs = k.kx / k.ky;
    if (lhs - rhs).abs() > TOL_ASPECT * lhs.abs().max(rhs.abs()) {
        return Err(Error::AspectMismatch { lhs, rhs });
    }
    ProjTransform4::from_matrix(Matrix4::from_diagonal(&[k.ks, k.kt, k.ks / k.kx, 1.0].into()))
}

/// The point transform from decoded-ray reconstructions to indexed-pixel
/// reconstructions: `X_d = P · X_c`.
pub fn p_from_intrinsics(intr: &Intrinsics) -> Result<ProjTransform4> {
    intr.validate()?;
    let Intrinsics { k_i, k_j, k_u, u0, v0, .. } = *intr;
    #[rustfmt::skip]
    let p = Matrix4::new(
        1.0 / k_i, 0.0,       -u0 / k_i, 0.0,
        0.0,       1.0 / k_j, -v0 / k_j, 0.0,
        0.0,       0.0,       k_u / k_i, 0.0,
        0.0,       0.0,       0.0,       1.0,
    );
    ProjTransform4::from_matrix(p)
}
