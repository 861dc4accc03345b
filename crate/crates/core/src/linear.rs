//! Closed-form initialization: one 4×3 homography per pose, the five-entry
//! B matrix, Cholesky recovery of the image-plane intrinsics, per-pose
//! extrinsics, and finally the view-plane scales `k_i`, `k_j`.

use nalgebra::{DMatrix, Matrix2, Matrix3, Matrix3x2, Matrix4x3, SMatrix, Vector2, Vector3};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::camera::Intrinsics;
use crate::dataset::{CalibrationDataset, CameraKind, Measurement};
use crate::error::{Error, Result};
use crate::geometry::Ray;
use crate::linalg::{nearest_rotation, smallest_right_singular};
use crate::pose::Pose;

/// Ratio of second-smallest to largest singular value below which the
/// homography nullspace is not one-dimensional.
pub const TOL_NULLSPACE: f64 = 1e-6;
/// Same, for the stacked B system (rank must be 4).
pub const TOL_B_RANK: f64 = 1e-10;

/// Per-pose 4×3 homography, normalized so `h₄₃ = 1`.
///
/// Rows map board coordinates to `(X', Y', Z', W)` of the indexed-ray
/// reconstruction. When `k_i/k_j ≠ k_u/k_v` the depth seen by the `y` rows
/// differs from the one seen by the `x` rows by a constant factor; that
/// factor is kept as `y_depth_ratio` (1 when the aspects agree).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Homography43 {
    m: Matrix4x3<f64>,
    y_depth_ratio: f64,
}

impl Homography43 {
    pub fn new(m: Matrix4x3<f64>) -> Result<Self> {
        Self::with_y_depth_ratio(m, 1.0)
    }

    pub fn with_y_depth_ratio(m: Matrix4x3<f64>, y_depth_ratio: f64) -> Result<Self> {
        let h43 = m[(3, 2)];
        if !(h43.abs() > f64::EPSILON * m.amax()) || !m.iter().all(|v| v.is_finite()) {
            return Err(Error::ZeroScale);
        }
        if !(y_depth_ratio.is_finite() && y_depth_ratio > 0.0) {
            return Err(Error::ZeroScale);
        }
        Ok(Homography43 { m: m / h43, y_depth_ratio })
    }

    /// `k_v k_i / (k_j k_u)` as seen by this pose.
    pub fn y_depth_ratio(&self) -> f64 {
        self.y_depth_ratio
    }

    pub fn matrix(&self) -> &Matrix4x3<f64> {
        &self.m
    }

    /// Top-left 3×2 block.
    pub fn g(&self) -> Matrix3x2<f64> {
        self.m.fixed_view::<3, 2>(0, 0).into_owned()
    }

    /// `(h₁₃, h₂₃, h₃₃)`.
    pub fn translation_column(&self) -> Vector3<f64> {
        self.m.fixed_view::<3, 1>(0, 2).into_owned()
    }

    /// Largest deviation of the bottom row from `(0, 0, 1)`.
    pub fn bottom_row_error(&self) -> f64 {
        self.m[(3, 0)].abs().max(self.m[(3, 1)].abs()).max((self.m[(3, 2)] - 1.0).abs())
    }
}

/// The distinct entries `(b₁₁, b₁₃, b₂₂, b₂₃, b₃₃)` of `B = A⁻ᵀA⁻¹`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BMatrix {
    pub b11: f64,
    pub b13: f64,
    pub b22: f64,
    pub b23: f64,
    pub b33: f64,
}

impl BMatrix {
    pub fn from_vector(b: [f64; 5]) -> Self {
        BMatrix { b11: b[0], b13: b[1], b22: b[2], b23: b[3], b33: b[4] }
    }

    pub fn to_vector(&self) -> [f64; 5] {
        [self.b11, self.b13, self.b22, self.b23, self.b33]
    }

    pub fn to_matrix(&self) -> Matrix3<f64> {
        Matrix3::new(self.b11, 0.0, self.b13, 0.0, self.b22, self.b23, self.b13, self.b23, self.b33)
    }

    /// Analytic `B` of a camera, as printed (exact under `k_i/k_j = k_u/k_v`).
    pub fn from_intrinsics(intr: &Intrinsics) -> Self {
        let Intrinsics { k_i, k_j, k_u, k_v, u0, v0 } = *intr;
        BMatrix {
            b11: k_i * k_i,
            b13: k_i * k_i * u0 / k_u,
            b22: k_j * k_j,
            b23: k_j * k_j * v0 / k_v,
            b33: k_i * k_i / (k_u * k_u) * (1.0 + u0 * u0 + v0 * v0),
        }
    }
}

/// The two constraint rows one homography contributes to the B system.
pub fn b_constraint_rows(g: &Matrix3x2<f64>) -> [[f64; 5]; 2] {
    let (g11, g21, g31) = (g[(0, 0)], g[(1, 0)], g[(2, 0)]);
    let (g12, g22, g32) = (g[(0, 1)], g[(1, 1)], g[(2, 1)]);
    [
        [g11 * g12, g11 * g32 + g12 * g31, g21 * g22, g21 * g32 + g31 * g22, g31 * g32],
        [
            g11 * g11 - g12 * g12,
            2.0 * (g11 * g31 - g12 * g32),
            g21 * g21 - g22 * g22,
            2.0 * (g21 * g31 - g22 * g32),
            g31 * g31 - g32 * g32,
        ],
    ]
}

/// Image-plane intrinsics recovered from `B`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PartialIntrinsics {
    pub k_u: f64,
    pub k_v: f64,
    pub u0: f64,
    pub v0: f64,
}

/// Rays of one board corner.
#[derive(Debug, Clone, PartialEq)]
pub struct PointRays {
    pub board: Vector2<f64>,
    pub rays: Vec<Ray>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinearCalibration {
    pub intrinsics: Intrinsics,
    pub poses: Vec<Pose>,
    pub homographies: Vec<Homography43>,
    pub b: BMatrix,
}

fn rms(values: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v * v, n + 1));
    if n == 0 {
        1.0
    } else {
        (sum / n as f64).sqrt()
    }
}

/// Estimate the pose homography from board corners and their ray bundles.
///
/// Ray and board coordinates are conditioned (centered and isotropically
/// scaled) before the SVD; the induced 3D transforms are undone afterwards.
pub fn estimate_homography(points: &[PointRays]) -> Result<Homography43> {
    if points.len() < 3 {
        return Err(Error::DegenerateBoard);
    }
    let f = points[0].rays.first().map_or(1.0, |r| r.f);
    for (k, p) in points.iter().enumerate() {
        let distinct = p.rays.iter().any(|a| p.rays.iter().any(|b| (a.s, a.t) != (b.s, b.t)));
        if !distinct {
            return Err(Error::InsufficientRays { point: k });
        }
        if let Some(r) = p.rays.iter().find(|r| r.f != f) {
            return Err(Error::SpacingMismatch(f, r.f));
        }
    }

    // board conditioning
    let n = points.len() as f64;
    let centroid = points.iter().map(|p| p.board).sum::<Vector2<f64>>() / n;
    let mut cov = Matrix2::zeros();
    for p in points {
        let d = p.board - centroid;
        cov += d * d.transpose();
    }
    let eig = cov.symmetric_eigenvalues();
    let (lo, hi) = (eig.min(), eig.max());
    if !(hi > 0.0) || lo <= 1e-10 * hi {
        return Err(Error::DegenerateBoard);
    }
    let board_scale = (cov.trace() / (2.0 * n)).sqrt();
    #[rustfmt::skip]
    let board_norm = Matrix3::new(
        1.0 / board_scale, 0.0, -centroid.x / board_scale,
        0.0, 1.0 / board_scale, -centroid.y / board_scale,
        0.0, 0.0, 1.0,
    );

    // ray conditioning
    let rays = || points.iter().flat_map(|p| p.rays.iter());
    let count = rays().count() as f64;
    let cx = rays().map(|r| r.x).sum::<f64>() / count;
    let cy = rays().map(|r| r.y).sum::<f64>() / count;
    let image_scale = rms(rays().flat_map(|r| [r.x - cx, r.y - cy]));
    let view_scale = rms(rays().flat_map(|r| [r.s, r.t]));
    let image_scale = if image_scale > 0.0 { image_scale } else { 1.0 };
    let view_scale = if view_scale > 0.0 { view_scale } else { 1.0 };

    // Unknowns are the five rows (X', Y', Z'ₓ, Z'ᵧ, W): x rows see Z'ₓ and
    // y rows see Z'ᵧ, so the fit stays exact when the view and image aspects
    // differ. In conditioned coordinates the rows are
    // (X' − cₓZ'ₓ/f, Y' − c_yZ'ᵧ/f, σ_img Z'ₓ, σ_img Z'ᵧ, σ_view W).
    let total_rays = rays().count();
    let mut a = DMatrix::zeros(2 * total_rays, 15);
    let mut row = 0;
    for p in points {
        let q = board_norm * Vector3::new(p.board.x, p.board.y, 1.0);
        for r in &p.rays {
            let (s, t) = (r.s / view_scale, r.t / view_scale);
            let (x, y) = ((r.x - cx) / image_scale, (r.y - cy) / image_scale);
            let coeffs = [[f, 0.0, -x, 0.0, -f * s], [0.0, f, 0.0, -y, -f * t]];
            for (k, c) in coeffs.iter().enumerate() {
                for (h, ch) in c.iter().enumerate() {
                    for d in 0..3 {
                        a[(row + k, 3 * h + d)] = ch * q[d];
                    }
                }
            }
            row += 2;
        }
    }
    let (h, sv) = smallest_right_singular(&a);
    let ratio = sv[13] / sv[0];
    if !(ratio >= TOL_NULLSPACE) {
        return Err(Error::NullspaceAmbiguous { ratio });
    }
    let h_norm = SMatrix::<f64, 5, 3>::from_row_slice(h.as_slice());
    #[rustfmt::skip]
    let cond = SMatrix::<f64, 5, 5>::from_row_slice(&[
        1.0, 0.0, -cx / f, 0.0, 0.0,
        0.0, 1.0, 0.0, -cy / f, 0.0,
        0.0, 0.0, image_scale, 0.0, 0.0,
        0.0, 0.0, 0.0, image_scale, 0.0,
        0.0, 0.0, 0.0, 0.0, view_scale,
    ]);
    let h5 = cond.try_inverse().ok_or(Error::ZeroScale)? * h_norm * board_norm;
    let (zx, zy) = (h5.row(2), h5.row(3));
    let y_depth_ratio = zx.dot(&zy) / zx.norm_squared();
    let h = Matrix4x3::from_rows(&[h5.row(0), h5.row(1), h5.row(2), h5.row(4)]);
    Homography43::with_y_depth_ratio(h, y_depth_ratio)
}

/// Solve the homogeneous B system from two or more pose homographies.
pub fn solve_b(homographies: &[Homography43]) -> Result<BMatrix> {
    if homographies.len() < 2 {
        return Err(Error::RankDeficient { what: "B system", ratio: 0.0 });
    }
    let mut v = DMatrix::zeros(2 * homographies.len(), 5);
    for (k, h) in homographies.iter().enumerate() {
        // G is only defined up to scale; unit norm keeps poses equally weighted
        let g = h.g();
        let g = g / g.norm();
        for (r, row) in b_constraint_rows(&g).iter().enumerate() {
            for c in 0..5 {
                v[(2 * k + r, c)] = row[c];
            }
        }
    }
    let (b, sv) = smallest_right_singular(&v);
    let ratio = sv[3] / sv[0];
    if !(ratio >= TOL_B_RANK) {
        return Err(Error::RankDeficient { what: "B system", ratio });
    }
    let sign = if b[0] < 0.0 { -1.0 } else { 1.0 };
    Ok(BMatrix::from_vector([b[0], b[1], b[2], b[3], b[4]].map(|x| x * sign)))
}

/// Cholesky-factor `B = L·Lᵀ` and read `(k_u, k_v, u₀, v₀)` off `Â⁻¹ = Lᵀ`.
/// The `k_v` read here is `k_j k_u / k_i`; it equals `k_v` only when the
/// view and image aspects agree.
pub fn intrinsics_from_b(b: &BMatrix) -> Result<(PartialIntrinsics, Matrix3<f64>)> {
    let mut m = b.to_matrix();
    if m[(0, 0)] < 0.0 {
        m = -m;
    }
    let chol = m.cholesky().ok_or(Error::NotPositiveDefinite)?;
    let a_inv = chol.l().transpose();
    let a33 = a_inv[(2, 2)];
    let partial = PartialIntrinsics {
        k_u: a_inv[(0, 0)] / a33,
        k_v: a_inv[(1, 1)] / a33,
        u0: a_inv[(0, 2)] / a33,
        v0: a_inv[(1, 2)] / a33,
    };
    Ok((partial, a_inv))
}

/// Rotation and translation of one pose from its homography; also returns
/// the scale `λ`.
pub fn extrinsics_from_h(h: &Homography43, a_inv: &Matrix3<f64>, kind: CameraKind) -> Result<(Pose, f64)> {
    let g = h.g();
    let a1 = a_inv * g.column(0);
    let a2 = a_inv * g.column(1);
    let mut lambda = (a1.norm() + a2.norm()) / 2.0;
    if !(lambda > f64::MIN_POSITIVE) || !lambda.is_finite() {
        return Err(Error::ZeroScale);
    }
    let at = a_inv * h.translation_column();
    if at.z * kind.depth_sign() < 0.0 {
        lambda = -lambda;
    }
    let r1 = a1 / lambda;
    let r2 = a2 / lambda;
    let r3 = r1.cross(&r2);
    let t = at / lambda;
    let r = nearest_rotation(&Matrix3::from_columns(&[r1, r2, r3]));
    Ok((Pose::from_matrix(&r, t), lambda))
}

/// Least-squares `k_i`, `k_j` from `i·k_i = X_c − x·Z_c` and
/// `j·k_j = Y_c − y·Z_c` stacked over every pose.
pub fn solve_ki_kj(
    poses: &[Pose],
    partial: &PartialIntrinsics,
    observations: &[Vec<Measurement>],
) -> Result<(f64, f64)> {
    let (mut num_i, mut den_i, mut num_j, mut den_j) = (0.0, 0.0, 0.0, 0.0);
    for (pose, obs) in poses.iter().zip(observations) {
        for m in obs {
            let xc = pose.board_to_camera(&m.board);
            let x = partial.k_u * m.pixel.u + partial.u0;
            let y = partial.k_v * m.pixel.v + partial.v0;
            num_i += m.pixel.i * (xc.x - x * xc.z);
            den_i += m.pixel.i * m.pixel.i;
            num_j += m.pixel.j * (xc.y - y * xc.z);
            den_j += m.pixel.j * m.pixel.j;
        }
    }
    if den_i == 0.0 {
        return Err(Error::NoParallax { axis: 'i' });
    }
    if den_j == 0.0 {
        return Err(Error::NoParallax { axis: 'j' });
    }
    Ok((num_i / den_i, num_j / den_j))
}

/// Group a pose's measurements into per-corner ray bundles for the
/// homography; corners seen from fewer than two views are skipped.
fn pose_bundles(dataset: &CalibrationDataset, p: usize) -> Vec<PointRays> {
    dataset
        .by_corner(p)
        .into_values()
        .filter_map(|ms| {
            let rays: Vec<Ray> = ms.iter().map(|m| Ray::unit(m.pixel.i, m.pixel.j, m.pixel.u, m.pixel.v)).collect();
            let distinct = rays.iter().any(|a| (a.s, a.t) != (rays[0].s, rays[0].t));
            distinct.then(|| PointRays { board: ms[0].board, rays })
        })
        .collect()
}

/// Full closed-form initialization of intrinsics and per-pose extrinsics.
pub fn linear_calibrate(dataset: &CalibrationDataset, kind: CameraKind) -> Result<LinearCalibration> {
    dataset.validate()?;
    let n = dataset.pose_count();
    if n < 2 {
        return Err(Error::InsufficientPoses { found: n });
    }
    if n == 2 {
        log::warn!("calibrating from only two poses; estimates will be poorly conditioned");
    }
    let homographies = (0..n)
        .into_par_iter()
        .map(|p| estimate_homography(&pose_bundles(dataset, p)).map_err(|e| e.at_pose(p)))
        .collect::<Result<Vec<_>>>()?;
    let b = solve_b(&homographies)?;
    let (mut partial, a_inv) = intrinsics_from_b(&b)?;
    // B only sees the x-row depth; k_v picks up the y-row depth ratio.
    let y_depth_ratio = homographies.iter().map(Homography43::y_depth_ratio).sum::<f64>() / n as f64;
    partial.k_v *= y_depth_ratio;
    let poses = homographies
        .iter()
        .enumerate()
        .map(|(p, h)| extrinsics_from_h(h, &a_inv, kind).map(|(pose, _)| pose).map_err(|e| e.at_pose(p)))
        .collect::<Result<Vec<_>>>()?;
    let observations: Vec<Vec<Measurement>> = (0..n).map(|p| dataset.measurements(p).collect()).collect();
    let (k_i, k_j) = solve_ki_kj(&poses, &partial, &observations)?;
    let intrinsics = Intrinsics::new(k_i, k_j, partial.k_u, partial.k_v, partial.u0, partial.v0)?;
    Ok(LinearCalibration { intrinsics, poses, homographies, b })
}
