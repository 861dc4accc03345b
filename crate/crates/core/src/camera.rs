//! The six-parameter camera: decoding indexed pixels into normalized rays,
//! and the four-coefficient distortion model.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{PixelIndex, Ray};

/// Decoding parameters mapping `(i, j, u, v)` to `(s, t, x, y)` at unit
/// plane spacing.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Intrinsics {
    pub k_i: f64,
    pub k_j: f64,
    pub k_u: f64,
    pub k_v: f64,
    pub u0: f64,
    pub v0: f64,
}

impl Intrinsics {
    pub const NAMES: [&'static str; 6] = ["k_i", "k_j", "k_u", "k_v", "u0", "v0"];

    pub fn new(k_i: f64, k_j: f64, k_u: f64, k_v: f64, u0: f64, v0: f64) -> Result<Self> {
        let intr = Intrinsics { k_i, k_j, k_u, k_v, u0, v0 };
        intr.validate()?;
        Ok(intr)
    }

    pub fn identity() -> Self {
        Intrinsics { k_i: 1.0, k_j: 1.0, k_u: 1.0, k_v: 1.0, u0: 0.0, v0: 0.0 }
    }

    pub fn validate(&self) -> Result<()> {
        if !self.to_array().iter().all(|v| v.is_finite()) {
            return Err(Error::InvalidIntrinsics("non-finite parameter".into()));
        }
        if [self.k_i, self.k_j, self.k_u, self.k_v].contains(&0.0) {
            return Err(Error::InvalidIntrinsics("scale factors must be nonzero".into()));
        }
        Ok(())
    }

    pub fn to_array(&self) -> [f64; 6] {
        [self.k_i, self.k_j, self.k_u, self.k_v, self.u0, self.v0]
    }

    pub fn from_array(a: [f64; 6]) -> Self {
        Intrinsics { k_i: a[0], k_j: a[1], k_u: a[2], k_v: a[3], u0: a[4], v0: a[5] }
    }

    /// Principal point `(−u₀/k_u, −v₀/k_v)` in pixels.
    pub fn principal_point(&self) -> (f64, f64) {
        (-self.u0 / self.k_u, -self.v0 / self.k_v)
    }

    /// Indexed pixel to normalized ray (`f = 1`).
    pub fn decode(&self, px: &PixelIndex) -> Ray {
        Ray::unit(self.k_i * px.i, self.k_j * px.j, self.k_u * px.u + self.u0, self.k_v * px.v + self.v0)
    }

    /// Exact inverse of [`decode`](Self::decode); view indices come back continuous.
    pub fn encode(&self, ray: &Ray) -> PixelIndex {
        PixelIndex {
            i: ray.s / self.k_i,
            j: ray.t / self.k_j,
            u: (ray.x - self.u0) / self.k_u,
            v: (ray.y - self.v0) / self.k_v,
        }
    }
}

/// Radial `(k₁, k₂)` and view-dependent `(k₃, k₄)` distortion coefficients.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Distortion {
    pub k1: f64,
    pub k2: f64,
    pub k3: f64,
    pub k4: f64,
}

pub const DISTORT_MAX_ITER: usize = 50;

impl Distortion {
    pub const NAMES: [&'static str; 4] = ["k1", "k2", "k3", "k4"];

    pub fn new(k1: f64, k2: f64, k3: f64, k4: f64) -> Self {
        Distortion { k1, k2, k3, k4 }
    }

    pub fn is_zero(&self) -> bool {
        self.to_array().iter().all(|&k| k == 0.0)
    }

    pub fn to_array(&self) -> [f64; 4] {
        [self.k1, self.k2, self.k3, self.k4]
    }

    pub fn from_array(a: [f64; 4]) -> Self {
        Distortion { k1: a[0], k2: a[1], k3: a[2], k4: a[3] }
    }

    /// Rectify distorted image coordinates `(x, y)` observed from view `(s, t)`.
    pub fn undistort(&self, x: f64, y: f64, s: f64, t: f64) -> (f64, f64) {
        let r2 = x * x + y * y;
        let radial = 1.0 + self.k1 * r2 + self.k2 * r2 * r2;
        (radial * x + self.k3 * s, radial * y + self.k4 * t)
    }

    /// Distorted coordinates whose rectification is `(xu, yu)`; damped
    /// Newton iteration started at the undistorted point.
    pub fn distort(&self, xu: f64, yu: f64, s: f64, t: f64) -> Result<(f64, f64)> {
        if self.is_zero() {
            return Ok((xu, yu));
        }
        let residual = |x: f64, y: f64| {
            let (a, b) = self.undistort(x, y, s, t);
            (a - xu, b - yu)
        };
        let (mut x, mut y) = (xu, yu);
        let (mut fx, mut fy) = residual(x, y);
        let tol = 1e-15 * (1.0 + xu.abs().max(yu.abs()));
        for _ in 0..DISTORT_MAX_ITER {
            let norm = fx.hypot(fy);
            if norm <= tol {
                return Ok((x, y));
            }
            let r2 = x * x + y * y;
            let radial = 1.0 + self.k1 * r2 + self.k2 * r2 * r2;
            let dradial = 2.0 * (self.k1 + 2.0 * self.k2 * r2);
            let j11 = radial + dradial * x * x;
            let j12 = dradial * x * y;
            let j22 = radial + dradial * y * y;
            let det = j11 * j22 - j12 * j12;
            if det == 0.0 || !det.is_finite() {
                break;
            }
            let dx = (j22 * fx - j12 * fy) / det;
            let dy = (j11 * fy - j12 * fx) / det;
            let mut step = 1.0;
            loop {
                let (nx, ny) = (x - step * dx, y - step * dy);
                let (nfx, nfy) = residual(nx, ny);
                if nfx.hypot(nfy) < norm || step < 1e-4 {
                    x = nx;
                    y = ny;
                    fx = nfx;
                    fy = nfy;
                    break;
                }
                step *= 0.5;
            }
        }
        if fx.hypot(fy) <= tol.max(1e-14) {
            return Ok((x, y));
        }
        Err(Error::NoConvergence { iterations: DISTORT_MAX_ITER })
    }
}
