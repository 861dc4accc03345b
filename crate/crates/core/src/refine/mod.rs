//! Joint refinement of intrinsics, distortion and poses.
//!
//! Packing order of the parameter vector:
//! `[k_i, k_j, k_u, k_v, u0, v0, k1, k2, k3, k4, ω₁, t₁, …, ω_P, t_P]`.

pub mod lm;

use nalgebra::{DMatrix, DVector, Matrix2, SMatrix, SVector, Vector2, Vector3};
use rayon::prelude::*;

use crate::camera::{Distortion, Intrinsics};
use crate::dataset::CalibrationDataset;
use crate::error::{Error, Result};
use crate::geometry::PixelIndex;
use crate::pose::Pose;
use crate::rotation::{rodrigues, rodrigues_derivatives};

pub use lm::{LmOptions, LmReport, Termination};

/// Intrinsic plus distortion parameters.
pub const N_GLOBAL: usize = 10;
pub const N_POSE: usize = 6;
const N_LOCAL: usize = N_GLOBAL + N_POSE;
const EPS_Z: f64 = 1e-12;

type LocalJacobian = SMatrix<f64, 2, N_LOCAL>;

/// Where residuals are measured.
///
/// `Rectified`: undistorted decoded observation minus model projection, in
/// normalized image units. `Observed`: observed pixel minus the model point
/// pushed through the distortion and encoded, in pixels. The optimizer uses
/// `Observed`; a rectified-domain cost can be lowered by contractive
/// distortion and by shrinking `(k_u, k_v, u0, v0)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ResidualDomain {
    Rectified,
    #[default]
    Observed,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParameterVector(DVector<f64>);

impl ParameterVector {
    pub fn from_parts(intrinsics: &Intrinsics, distortion: &Distortion, poses: &[Pose]) -> Self {
        let mut v = DVector::zeros(N_GLOBAL + N_POSE * poses.len());
        v.as_mut_slice()[..6].copy_from_slice(&intrinsics.to_array());
        v.as_mut_slice()[6..10].copy_from_slice(&distortion.to_array());
        for (p, pose) in poses.iter().enumerate() {
            let o = N_GLOBAL + N_POSE * p;
            v.as_mut_slice()[o..o + 3].copy_from_slice(pose.rotation.as_slice());
            v.as_mut_slice()[o + 3..o + 6].copy_from_slice(pose.translation.as_slice());
        }
        ParameterVector(v)
    }

    pub fn from_vector(v: DVector<f64>) -> Result<Self> {
        if v.len() < N_GLOBAL || !(v.len() - N_GLOBAL).is_multiple_of(N_POSE) {
            let poses = v.len().saturating_sub(N_GLOBAL).div_ceil(N_POSE);
            return Err(Error::DimensionMismatch { expected: N_GLOBAL + N_POSE * poses, found: v.len() });
        }
        Ok(ParameterVector(v))
    }

    pub fn as_vector(&self) -> &DVector<f64> {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn n_poses(&self) -> usize {
        (self.0.len() - N_GLOBAL) / N_POSE
    }

    pub fn intrinsics(&self) -> Intrinsics {
        let v = &self.0;
        Intrinsics::from_array([v[0], v[1], v[2], v[3], v[4], v[5]])
    }

    pub fn distortion(&self) -> Distortion {
        let v = &self.0;
        Distortion::from_array([v[6], v[7], v[8], v[9]])
    }

    pub fn pose(&self, p: usize) -> Pose {
        let o = N_GLOBAL + N_POSE * p;
        let v = &self.0;
        Pose::new(Vector3::new(v[o], v[o + 1], v[o + 2]), Vector3::new(v[o + 3], v[o + 4], v[o + 5]))
    }

    pub fn poses(&self) -> Vec<Pose> {
        (0..self.n_poses()).map(|p| self.pose(p)).collect()
    }
}

/// Residual of one observation and, optionally, its 2×16 Jacobian with
/// respect to `[globals, ω, t]`.
fn observation_residual(
    g: &[f64],
    rot: &nalgebra::Matrix3<f64>,
    drot: Option<&[nalgebra::Matrix3<f64>; 3]>,
    trans: &Vector3<f64>,
    board: &Vector2<f64>,
    px: &PixelIndex,
) -> Result<(Vector2<f64>, Option<LocalJacobian>)> {
    let (k_i, k_j, k_u, k_v, u0, v0) = (g[0], g[1], g[2], g[3], g[4], g[5]);
    let (k1, k2, k3, k4) = (g[6], g[7], g[8], g[9]);
    let s = k_i * px.i;
    let t = k_j * px.j;
    let x = k_u * px.u + u0;
    let y = k_v * px.v + v0;
    let rho = x * x + y * y;
    let radial = 1.0 + k1 * rho + k2 * rho * rho;
    let xu = radial * x + k3 * s;
    let yu = radial * y + k4 * t;

    let xw = Vector3::new(board.x, board.y, 0.0);
    let xc = rot * xw + trans;
    if xc.z.abs() < EPS_Z {
        return Err(Error::DegenerateProjection { z: xc.z });
    }
    let iz = 1.0 / xc.z;
    let xh = (xc.x - s) * iz;
    let yh = (xc.y - t) * iz;
    let r = Vector2::new(xu - xh, yu - yh);

    let Some(drot) = drot else {
        return Ok((r, None));
    };
    let mut j = LocalJacobian::zeros();
    let dradial = k1 + 2.0 * k2 * rho;
    // d(xu, yu)/d(x, y)
    let dxu_dx = radial + 2.0 * x * x * dradial;
    let dxu_dy = 2.0 * x * y * dradial;
    let dyu_dx = dxu_dy;
    let dyu_dy = radial + 2.0 * y * y * dradial;

    j[(0, 0)] = k3 * px.i + px.i * iz;
    j[(1, 1)] = k4 * px.j + px.j * iz;
    j[(0, 2)] = dxu_dx * px.u;
    j[(1, 2)] = dyu_dx * px.u;
    j[(0, 3)] = dxu_dy * px.v;
    j[(1, 3)] = dyu_dy * px.v;
    j[(0, 4)] = dxu_dx;
    j[(1, 4)] = dyu_dx;
    j[(0, 5)] = dxu_dy;
    j[(1, 5)] = dyu_dy;
    j[(0, 6)] = rho * x;
    j[(1, 6)] = rho * y;
    j[(0, 7)] = rho * rho * x;
    j[(1, 7)] = rho * rho * y;
    j[(0, 8)] = s;
    j[(1, 9)] = t;

    // −d(x̂, ŷ)/dX_c
    let dproj = nalgebra::Matrix2x3::new(-iz, 0.0, xh * iz, 0.0, -iz, yh * iz);
    for k in 0..3 {
        let d = dproj * (drot[k] * xw);
        j[(0, N_GLOBAL + k)] = d.x;
        j[(1, N_GLOBAL + k)] = d.y;
    }
    j.fixed_view_mut::<2, 3>(0, N_GLOBAL + 3).copy_from(&dproj);
    Ok((r, Some(j)))
}

/// Observed-domain pixel residual and, optionally, its Jacobian.
fn observed_residual(
    g: &[f64],
    rot: &nalgebra::Matrix3<f64>,
    drot: Option<&[nalgebra::Matrix3<f64>; 3]>,
    trans: &Vector3<f64>,
    board: &Vector2<f64>,
    px: &PixelIndex,
) -> Result<(Vector2<f64>, Option<LocalJacobian>)> {
    let (k_i, k_j, k_u, k_v, u0, v0) = (g[0], g[1], g[2], g[3], g[4], g[5]);
    let (k1, k2, k3, k4) = (g[6], g[7], g[8], g[9]);
    let s = k_i * px.i;
    let t = k_j * px.j;
    let xw = Vector3::new(board.x, board.y, 0.0);
    let xc = rot * xw + trans;
    if xc.z.abs() < EPS_Z {
        return Err(Error::DegenerateProjection { z: xc.z });
    }
    let iz = 1.0 / xc.z;
    let xh = (xc.x - s) * iz;
    let yh = (xc.y - t) * iz;
    let (xd, yd) = Distortion::new(k1, k2, k3, k4).distort(xh, yh, s, t)?;
    let uh = (xd - u0) / k_u;
    let vh = (yd - v0) / k_v;
    let r = Vector2::new(px.u - uh, px.v - vh);

    let Some(drot) = drot else {
        return Ok((r, None));
    };
    // G = ∂(x̂, ŷ)/∂θ − ∂U/∂θ|explicit, then ∂(x_d, y_d)/∂θ = A⁻¹ G.
    let mut gm = LocalJacobian::zeros();
    let rho = xd * xd + yd * yd;
    gm[(0, 0)] = -px.i * iz - k3 * px.i;
    gm[(1, 1)] = -px.j * iz - k4 * px.j;
    gm[(0, 6)] = -rho * xd;
    gm[(1, 6)] = -rho * yd;
    gm[(0, 7)] = -rho * rho * xd;
    gm[(1, 7)] = -rho * rho * yd;
    gm[(0, 8)] = -s;
    gm[(1, 9)] = -t;
    let dproj = nalgebra::Matrix2x3::new(iz, 0.0, -xh * iz, 0.0, iz, -yh * iz);
    for k in 0..3 {
        let d = dproj * (drot[k] * xw);
        gm[(0, N_GLOBAL + k)] = d.x;
        gm[(1, N_GLOBAL + k)] = d.y;
    }
    gm.fixed_view_mut::<2, 3>(0, N_GLOBAL + 3).copy_from(&dproj);

    let radial = 1.0 + k1 * rho + k2 * rho * rho;
    let dradial = k1 + 2.0 * k2 * rho;
    let a = Matrix2::new(
        radial + 2.0 * xd * xd * dradial,
        2.0 * xd * yd * dradial,
        2.0 * xd * yd * dradial,
        radial + 2.0 * yd * yd * dradial,
    );
    let a_inv = a.try_inverse().ok_or(Error::NoConvergence { iterations: 0 })?;
    let dxd = a_inv * gm;

    let mut j = LocalJacobian::zeros();
    for c in 0..N_LOCAL {
        j[(0, c)] = -dxd[(0, c)] / k_u;
        j[(1, c)] = -dxd[(1, c)] / k_v;
    }
    j[(0, 2)] += uh / k_u;
    j[(1, 3)] += vh / k_v;
    j[(0, 4)] += 1.0 / k_u;
    j[(1, 5)] += 1.0 / k_v;
    Ok((r, Some(j)))
}

struct PoseBlock {
    cost: f64,
    jtj: SMatrix<f64, N_LOCAL, N_LOCAL>,
    jtr: SVector<f64, N_LOCAL>,
}

/// Flattened observations with their pose and global observation index.
struct Problem<'a> {
    dataset: &'a CalibrationDataset,
    offsets: Vec<usize>,
    domain: ResidualDomain,
    fixed: Vec<usize>,
}

impl<'a> Problem<'a> {
    fn new(dataset: &'a CalibrationDataset, domain: ResidualDomain) -> Self {
        let mut offsets = Vec::with_capacity(dataset.pose_count());
        let mut acc = 0;
        for p in 0..dataset.pose_count() {
            offsets.push(acc);
            acc += dataset.measurements(p).count();
        }
        Problem { dataset, offsets, domain, fixed: Vec::new() }
    }

    fn check(&self, theta: &DVector<f64>) -> Result<()> {
        let expected = N_GLOBAL + N_POSE * self.dataset.pose_count();
        if theta.len() != expected {
            return Err(Error::DimensionMismatch { expected, found: theta.len() });
        }
        Ok(())
    }

    fn observation(
        &self,
        g: &[f64],
        rot: &nalgebra::Matrix3<f64>,
        drot: Option<&[nalgebra::Matrix3<f64>; 3]>,
        trans: &Vector3<f64>,
        m: &crate::dataset::Measurement,
        obs: usize,
    ) -> Result<(Vector2<f64>, Option<LocalJacobian>)> {
        let f = match self.domain {
            ResidualDomain::Rectified => observation_residual,
            ResidualDomain::Observed => observed_residual,
        };
        f(g, rot, drot, trans, &m.board, &m.pixel).map_err(|e| e.at_observation(obs))
    }

    fn pose_residuals(&self, theta: &DVector<f64>, p: usize, out: &mut Vec<f64>) -> Result<()> {
        let o = N_GLOBAL + N_POSE * p;
        let rot = rodrigues(&Vector3::new(theta[o], theta[o + 1], theta[o + 2]));
        let trans = Vector3::new(theta[o + 3], theta[o + 4], theta[o + 5]);
        for (k, m) in self.dataset.measurements(p).enumerate() {
            let obs = self.offsets[p] + k;
            let (r, _) = self.observation(theta.as_slice(), &rot, None, &trans, &m, obs)?;
            if !(r.x.is_finite() && r.y.is_finite()) {
                return Err(Error::NonFinite { observation: obs });
            }
            out.extend_from_slice(r.as_slice());
        }
        Ok(())
    }

    fn pose_block(&self, theta: &DVector<f64>, p: usize) -> Result<PoseBlock> {
        let o = N_GLOBAL + N_POSE * p;
        let omega = Vector3::new(theta[o], theta[o + 1], theta[o + 2]);
        let rot = rodrigues(&omega);
        let drot = rodrigues_derivatives(&omega);
        let trans = Vector3::new(theta[o + 3], theta[o + 4], theta[o + 5]);
        let mut block = PoseBlock { cost: 0.0, jtj: SMatrix::zeros(), jtr: SVector::zeros() };
        for (k, m) in self.dataset.measurements(p).enumerate() {
            let obs = self.offsets[p] + k;
            let (r, j) = self.observation(theta.as_slice(), &rot, Some(&drot), &trans, &m, obs)?;
            let j = j.expect("jacobian requested");
            if !(r.iter().chain(j.iter()).all(|v| v.is_finite())) {
                return Err(Error::NonFinite { observation: obs });
            }
            block.cost += r.norm_squared();
            block.jtj += j.transpose() * j;
            block.jtr += j.transpose() * r;
        }
        Ok(block)
    }

    fn local_to_global(p: usize, k: usize) -> usize {
        if k < N_GLOBAL {
            k
        } else {
            N_GLOBAL + N_POSE * p + (k - N_GLOBAL)
        }
    }
}

impl lm::LeastSquaresProblem for Problem<'_> {
    fn dim(&self) -> usize {
        N_GLOBAL + N_POSE * self.dataset.pose_count()
    }

    fn cost(&self, theta: &DVector<f64>) -> Result<f64> {
        self.check(theta)?;
        let costs = (0..self.dataset.pose_count())
            .into_par_iter()
            .map(|p| {
                let mut r = Vec::new();
                self.pose_residuals(theta, p, &mut r)?;
                Ok(r.iter().map(|v| v * v).sum::<f64>())
            })
            .collect::<Result<Vec<f64>>>()?;
        Ok(costs.iter().sum())
    }

    fn linearize(&self, theta: &DVector<f64>) -> Result<lm::Linearization> {
        self.check(theta)?;
        let n = self.dim();
        let blocks = (0..self.dataset.pose_count())
            .into_par_iter()
            .map(|p| self.pose_block(theta, p))
            .collect::<Result<Vec<_>>>()?;
        let mut jtj = DMatrix::zeros(n, n);
        let mut jtr = DVector::zeros(n);
        let mut cost = 0.0;
        for (p, b) in blocks.iter().enumerate() {
            cost += b.cost;
            for a in 0..N_LOCAL {
                let ga = Self::local_to_global(p, a);
                jtr[ga] += b.jtr[a];
                for c in 0..N_LOCAL {
                    jtj[(ga, Self::local_to_global(p, c))] += b.jtj[(a, c)];
                }
            }
        }
        for &k in &self.fixed {
            jtj.row_mut(k).fill(0.0);
            jtj.column_mut(k).fill(0.0);
            jtj[(k, k)] = 1.0;
            jtr[k] = 0.0;
        }
        Ok(lm::Linearization { cost, jtj, jtr })
    }
}

/// Stacked residuals `(xᵘ − x̂, yᵘ − ŷ)` over every observation, pose by pose
/// in dataset order, in normalized image units.
pub fn residuals(theta: &ParameterVector, dataset: &CalibrationDataset) -> Result<DVector<f64>> {
    residuals_in(theta, dataset, ResidualDomain::Rectified)
}

pub fn residuals_in(
    theta: &ParameterVector,
    dataset: &CalibrationDataset,
    domain: ResidualDomain,
) -> Result<DVector<f64>> {
    let problem = Problem::new(dataset, domain);
    problem.check(theta.as_vector())?;
    let mut out = Vec::with_capacity(2 * dataset.measurement_count());
    for p in 0..dataset.pose_count() {
        problem.pose_residuals(theta.as_vector(), p, &mut out)?;
    }
    Ok(DVector::from_vec(out))
}

/// Dense Jacobian of [`residuals`] (mostly zeros; for inspection and tests).
pub fn jacobian(theta: &ParameterVector, dataset: &CalibrationDataset) -> Result<DMatrix<f64>> {
    jacobian_in(theta, dataset, ResidualDomain::Rectified)
}

pub fn jacobian_in(
    theta: &ParameterVector,
    dataset: &CalibrationDataset,
    domain: ResidualDomain,
) -> Result<DMatrix<f64>> {
    let problem = Problem::new(dataset, domain);
    let v = theta.as_vector();
    problem.check(v)?;
    let mut jac = DMatrix::zeros(2 * dataset.measurement_count(), v.len());
    for p in 0..dataset.pose_count() {
        let pose = theta.pose(p);
        let rot = rodrigues(&pose.rotation);
        let drot = rodrigues_derivatives(&pose.rotation);
        for (k, m) in dataset.measurements(p).enumerate() {
            let obs = problem.offsets[p] + k;
            let (_, j) = problem.observation(v.as_slice(), &rot, Some(&drot), &pose.translation, &m, obs)?;
            let j = j.expect("jacobian requested");
            for c in 0..N_LOCAL {
                let gc = Problem::local_to_global(p, c);
                jac[(2 * obs, gc)] = j[(0, c)];
                jac[(2 * obs + 1, gc)] = j[(1, c)];
            }
        }
    }
    Ok(jac)
}

/// Gauss–Newton approximation `JᵀJ` of the Hessian of the refinement cost.
pub fn normal_matrix(theta: &ParameterVector, dataset: &CalibrationDataset) -> Result<DMatrix<f64>> {
    use lm::LeastSquaresProblem;
    Ok(Problem::new(dataset, ResidualDomain::Observed).linearize(theta.as_vector())?.jtj)
}

/// Indices of the distortion coefficients in the packed vector.
pub const DISTORTION_INDICES: [usize; 4] = [6, 7, 8, 9];

/// Minimize the sum of squared observed-domain pixel residuals starting
/// from `theta0`.
pub fn optimize(
    theta0: &ParameterVector,
    dataset: &CalibrationDataset,
    options: &LmOptions,
) -> Result<(ParameterVector, LmReport)> {
    optimize_with_fixed(theta0, dataset, options, &[])
}

/// As [`optimize`], holding the listed packed parameters at their
/// starting values.
pub fn optimize_with_fixed(
    theta0: &ParameterVector,
    dataset: &CalibrationDataset,
    options: &LmOptions,
    fixed: &[usize],
) -> Result<(ParameterVector, LmReport)> {
    let mut problem = Problem::new(dataset, ResidualDomain::Observed);
    problem.check(theta0.as_vector())?;
    if let Some(&k) = fixed.iter().find(|&&k| k >= theta0.len()) {
        return Err(Error::DimensionMismatch { expected: theta0.len(), found: k + 1 });
    }
    problem.fixed = fixed.to_vec();
    let (x, report) = lm::minimize(&problem, theta0.as_vector().clone(), options)?;
    log::info!(
        "refinement: cost {:.6e} -> {:.6e} in {} iterations ({:?})",
        report.initial_cost,
        report.final_cost,
        report.iterations,
        report.termination
    );
    Ok((ParameterVector(x), report))
}

/// Per-observation residuals converted to pixels by `(k_u, k_v)`.
pub fn pixel_residuals(theta: &ParameterVector, dataset: &CalibrationDataset) -> Result<Vec<Vector2<f64>>> {
    let intr = theta.intrinsics();
    let scale = Matrix2::new(1.0 / intr.k_u, 0.0, 0.0, 1.0 / intr.k_v);
    let r = residuals(theta, dataset)?;
    Ok(r.as_slice().chunks_exact(2).map(|c| scale * Vector2::new(c[0], c[1])).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simulator::{generate, SimConfig};

    fn small(sigma: f64, distortion: Distortion) -> (CalibrationDataset, ParameterVector) {
        let cfg = SimConfig { view_grid: [3, 3], noise_sigma: sigma, distortion, seed: 11, ..SimConfig::default() };
        let (ds, truth) = generate(&cfg).unwrap();
        let theta = ParameterVector::from_parts(&truth.intrinsics, &truth.distortion, &truth.poses);
        (ds, theta)
    }

    fn lens() -> Distortion {
        Distortion { k1: -0.05, k2: 0.02, k3: 0.3, k4: -0.2 }
    }

    fn check_fd(domain: ResidualDomain) {
        let (ds, theta) = small(0.5, lens());
        let jac = jacobian_in(&theta, &ds, domain).unwrap();
        let base = theta.as_vector();
        for c in 0..base.len() {
            let h = 1e-6 * base[c].abs().max(1.0);
            let mut plus = base.clone();
            let mut minus = base.clone();
            plus[c] += h;
            minus[c] -= h;
            let rp = residuals_in(&ParameterVector(plus), &ds, domain).unwrap();
            let rm = residuals_in(&ParameterVector(minus), &ds, domain).unwrap();
            let fd = (rp - rm) / (2.0 * h);
            let col = jac.column(c);
            let err = (&fd - col).norm();
            assert!(
                err <= 1e-5 * col.norm().max(1.0),
                "column {c}: |fd - analytic| = {err:e}, |col| = {:e}",
                col.norm()
            );
        }
    }

    #[test]
    fn rectified_jacobian_matches_finite_differences() {
        check_fd(ResidualDomain::Rectified);
    }

    #[test]
    fn observed_jacobian_matches_finite_differences() {
        check_fd(ResidualDomain::Observed);
    }

    #[test]
    fn ground_truth_is_a_fixed_point() {
        let (ds, theta) = small(0.0, lens());
        let r = residuals_in(&theta, &ds, ResidualDomain::Observed).unwrap();
        assert!(r.norm_squared() < 1e-20);
        let (out, report) = optimize(&theta, &ds, &LmOptions::default()).unwrap();
        assert!(report.iterations <= 2, "{report:?}");
        assert!(report.final_cost < 1e-20);
        assert!((out.as_vector() - theta.as_vector()).norm() < 1e-9);
    }

    #[test]
    fn principal_point_shift_moves_rectified_residual() {
        let (ds, theta) = small(0.0, Distortion::default());
        let delta = 0.01;
        let mut v = theta.as_vector().clone();
        v[4] += delta;
        let r = residuals(&ParameterVector(v), &ds).unwrap();
        // decode gives x = k_u u + u0, so every x moves by exactly delta.
        let expected = delta;
        for c in r.as_slice().chunks_exact(2) {
            assert!((c[0] - expected).abs() < 1e-12 && c[1].abs() < 1e-12);
        }
    }

    #[test]
    fn wrong_length_is_rejected() {
        let (ds, theta) = small(0.0, Distortion::default());
        let mut v = theta.as_vector().as_slice().to_vec();
        v.pop();
        let short = ParameterVector::from_vector(DVector::from_vec(v.clone()));
        assert!(matches!(short, Err(Error::DimensionMismatch { .. })));
        v.truncate(N_GLOBAL + N_POSE);
        let one_pose = ParameterVector::from_vector(DVector::from_vec(v)).unwrap();
        assert!(matches!(residuals(&one_pose, &ds), Err(Error::DimensionMismatch { .. })));
        assert!(matches!(
            optimize_with_fixed(&theta, &ds, &LmOptions::default(), &[theta.len()]),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn fixed_parameters_do_not_move() {
        let (ds, theta) = small(0.5, Distortion::default());
        let mut v = theta.as_vector().clone();
        v[0] *= 1.01;
        v[4] += 2.0;
        let start = ParameterVector(v);
        let (out, _) = optimize_with_fixed(&start, &ds, &LmOptions::default(), &DISTORTION_INDICES).unwrap();
        for k in DISTORTION_INDICES {
            assert_eq!(out.as_vector()[k], 0.0);
        }
        assert!((out.as_vector()[0] / theta.as_vector()[0] - 1.0).abs() < 5e-3);
    }
}
