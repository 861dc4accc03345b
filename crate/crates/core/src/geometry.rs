//! Two-plane ray geometry of the multi-projection-center model.
//!
//! A ray `(s, t, x, y)` passes through the projection center `(s, t, 0)` on
//! the view plane and the image point `(x, y, f)` on the image plane. Every
//! projection center images the scene like a pinhole with focal length `f`.

use nalgebra::{DMatrix, Matrix2x4};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::smallest_right_singular;

pub type Point3 = nalgebra::Point3<f64>;

/// A light ray in two-plane coordinates with plane spacing `f`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Ray {
    pub s: f64,
    pub t: f64,
    pub x: f64,
    pub y: f64,
    pub f: f64,
}

impl Ray {
    pub fn new(s: f64, t: f64, x: f64, y: f64, f: f64) -> Result<Self> {
        let ray = Ray { s, t, x, y, f };
        ray.validate()?;
        Ok(ray)
    }

    /// Ray on planes with unit spacing.
    pub fn unit(s: f64, t: f64, x: f64, y: f64) -> Self {
        Ray { s, t, x, y, f: 1.0 }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.f.is_finite() && self.f > 0.0) {
            return Err(Error::InvalidRay(format!("spacing f = {} must be positive", self.f)));
        }
        if ![self.s, self.t, self.x, self.y].iter().all(|c| c.is_finite()) {
            return Err(Error::InvalidRay("non-finite coordinate".into()));
        }
        Ok(())
    }

    /// The ray through `point` from the projection center `(s, t)`.
    pub fn through(point: &Point3, s: f64, t: f64, f: f64) -> Result<Self> {
        let (x, y) = project(point, s, t, f)?;
        Ok(Ray { s, t, x, y, f })
    }
}

/// An indexed raw measurement `(i, j, u, v)`: view index and pixel position.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PixelIndex {
    pub i: f64,
    pub j: f64,
    pub u: f64,
    pub v: f64,
}

impl PixelIndex {
    pub fn new(i: f64, j: f64, u: f64, v: f64) -> Self {
        PixelIndex { i, j, u, v }
    }
}

/// Numerical thresholds for the geometric primitives.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GeometryTolerances {
    /// Minimum `|Z|` for a projectable point.
    pub eps_z: f64,
    /// Below this, image-coordinate differences count as parallel.
    pub eps_parallel: f64,
    /// `σ₃/σ₁` of the measurement matrix below this is rank deficient.
    pub tol_rank: f64,
}

impl Default for GeometryTolerances {
    fn default() -> Self {
        GeometryTolerances { eps_z: 1e-12, eps_parallel: 1e-10, tol_rank: 1e-8 }
    }
}

impl GeometryTolerances {
    pub fn project(&self, point: &Point3, s: f64, t: f64, f: f64) -> Result<(f64, f64)> {
        if point.z.abs() < self.eps_z {
            return Err(Error::DegenerateProjection { z: point.z });
        }
        Ok((f * (point.x - s) / point.z, f * (point.y - t) / point.z))
    }

    pub fn intersect_two_rays(&self, ri: &Ray, rj: &Ray) -> Result<Point3> {
        if ri.f != rj.f {
            return Err(Error::SpacingMismatch(ri.f, rj.f));
        }
        let f = ri.f;
        let dx = ri.x - rj.x;
        let dy = ri.y - rj.y;
        if dx.abs() < self.eps_parallel && dy.abs() < self.eps_parallel {
            return Err(Error::ParallelRays);
        }
        if dx.abs() >= dy.abs() {
            Ok(Point3::new(
                (rj.s * ri.x - ri.s * rj.x) / dx,
                (ri.t * dx - ri.y * (ri.s - rj.s)) / dx,
                f * (rj.s - ri.s) / dx,
            ))
        } else {
            Ok(Point3::new(
                (ri.s * dy - ri.x * (ri.t - rj.t)) / dy,
                (rj.t * ri.y - ri.t * rj.y) / dy,
                f * (rj.t - ri.t) / dy,
            ))
        }
    }

    pub fn triangulate(&self, rays: &[Ray]) -> Result<Point3> {
        if rays.len() < 2 {
            return Err(Error::RankDeficient { what: "ray bundle", ratio: 0.0 });
        }
        let f = rays[0].f;
        if let Some(r) = rays.iter().find(|r| r.f != f) {
            return Err(Error::SpacingMismatch(f, r.f));
        }
        let m = measurement_matrix(rays);
        let (v, sv) = smallest_right_singular(&m);
        let ratio = if sv[0] > 0.0 { sv[2] / sv[0] } else { 0.0 };
        if ratio < self.tol_rank {
            return Err(Error::RankDeficient { what: "ray bundle", ratio });
        }
        if v[3].abs() < f64::EPSILON * v.amax() {
            return Err(Error::ParallelRays);
        }
        Ok(Point3::new(v[0] / v[3], v[1] / v[3], v[2] / v[3]))
    }
}

/// Image projection of `point` seen from the view `(s, t)`.
pub fn project(point: &Point3, s: f64, t: f64, f: f64) -> Result<(f64, f64)> {
    GeometryTolerances::default().project(point, s, t, f)
}

/// The two rows a ray contributes to the measurement matrix.
pub fn measurement_rows(ray: &Ray) -> Matrix2x4<f64> {
    let f = ray.f;
    Matrix2x4::new(f, 0.0, -ray.x, -f * ray.s, 0.0, f, -ray.y, -f * ray.t)
}

/// Stacked `2n × 4` measurement matrix; its nullspace is the homogeneous
/// intersection point of the rays.
pub fn measurement_matrix(rays: &[Ray]) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(2 * rays.len(), 4);
    for (k, ray) in rays.iter().enumerate() {
        m.fixed_view_mut::<2, 4>(2 * k, 0).copy_from(&measurement_rows(ray));
    }
    m
}

/// Closed-form intersection of two rays, using whichever of the two
/// equivalent forms has the larger denominator.
pub fn intersect_two_rays(ri: &Ray, rj: &Ray) -> Result<Point3> {
    GeometryTolerances::default().intersect_two_rays(ri, rj)
}

/// Total-least-squares intersection of a ray bundle.
pub fn triangulate(rays: &[Ray]) -> Result<Point3> {
    GeometryTolerances::default().triangulate(rays)
}

#[cfg(test)]
pub(crate) fn homogeneous(p: &Point3) -> nalgebra::Vector4<f64> {
    p.to_homogeneous()
}
