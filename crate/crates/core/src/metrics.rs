//! Re-projection error in pixels, ray re-projection error in millimeters,
//! per-view and per-pose breakdowns, and plain-text pose export.
//!
//! Pixel RMS values are per image coordinate: `sqrt(Σ (e_u² + e_v²) / 2N)`.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use nalgebra::{Vector2, Vector3};
use serde::{Deserialize, Serialize};

use crate::dataset::{BoardSpec, CalibrationDataset, ViewGrid};
use crate::error::{Error, Result};
use crate::pose::Pose;
use crate::refine::{pixel_residuals, ParameterVector};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ViewError {
    pub i: i32,
    pub j: i32,
    pub count: usize,
    pub rms_px: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoseError {
    pub pose_id: u32,
    pub count: usize,
    pub rms_px: f64,
    pub rms_mm: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub rms_reproj_px: f64,
    pub mean_reproj_px: f64,
    pub rms_ray_reproj_mm: f64,
    pub per_view: Vec<ViewError>,
    pub per_pose: Vec<PoseError>,
}

#[derive(Default)]
struct Acc {
    sum_sq: f64,
    count: usize,
}

impl Acc {
    fn add(&mut self, sq: f64) {
        self.sum_sq += sq;
        self.count += 1;
    }

    fn rms(&self, components: f64) -> f64 {
        if self.count == 0 {
            0.0
        } else {
            (self.sum_sq / (components * self.count as f64)).sqrt()
        }
    }
}

/// Perpendicular distance from `point` to the line through `origin` along `dir`.
pub fn point_to_ray_distance(point: &Vector3<f64>, origin: &Vector3<f64>, dir: &Vector3<f64>) -> f64 {
    (point - origin).cross(dir).norm() / dir.norm()
}

/// Per-observation ray distances in meters, pose by pose.
pub fn ray_distances(theta: &ParameterVector, dataset: &CalibrationDataset) -> Vec<f64> {
    let intr = theta.intrinsics();
    let dist = theta.distortion();
    let mut out = Vec::with_capacity(dataset.measurement_count());
    for p in 0..dataset.pose_count() {
        let pose = theta.pose(p);
        for m in dataset.measurements(p) {
            let ray = intr.decode(&m.pixel);
            let (xu, yu) = dist.undistort(ray.x, ray.y, ray.s, ray.t);
            let xc = pose.board_to_camera(&m.board).coords;
            out.push(point_to_ray_distance(&xc, &Vector3::new(ray.s, ray.t, 0.0), &Vector3::new(xu, yu, 1.0)));
        }
    }
    out
}

/// Pixel residuals of every observation, pose by pose.
pub fn reprojection_residuals_px(theta: &ParameterVector, dataset: &CalibrationDataset) -> Result<Vec<Vector2<f64>>> {
    pixel_residuals(theta, dataset)
}

pub fn reprojection_error_px(theta: &ParameterVector, dataset: &CalibrationDataset) -> Result<f64> {
    let r = pixel_residuals(theta, dataset)?;
    let mut acc = Acc::default();
    r.iter().for_each(|e| acc.add(e.norm_squared()));
    Ok(acc.rms(2.0))
}

pub fn ray_reprojection_error_mm(theta: &ParameterVector, dataset: &CalibrationDataset) -> f64 {
    let mut acc = Acc::default();
    ray_distances(theta, dataset).iter().for_each(|d| acc.add((d * 1e3).powi(2)));
    acc.rms(1.0)
}

/// Full metric report of a parameter set on a dataset.
pub fn evaluate(theta: &ParameterVector, dataset: &CalibrationDataset) -> Result<MetricReport> {
    let px = pixel_residuals(theta, dataset)?;
    let mm = ray_distances(theta, dataset);
    let mut total_px = Acc::default();
    let mut total_mm = Acc::default();
    let mut sum_norm = 0.0;
    let mut views: BTreeMap<(i32, i32), Acc> = BTreeMap::new();
    let mut per_pose = Vec::with_capacity(dataset.pose_count());
    let mut k = 0;
    for (p, pose) in dataset.poses.iter().enumerate() {
        let mut pose_px = Acc::default();
        let mut pose_mm = Acc::default();
        for m in dataset.measurements(p) {
            let sq = px[k].norm_squared();
            let d = (mm[k] * 1e3).powi(2);
            total_px.add(sq);
            total_mm.add(d);
            pose_px.add(sq);
            pose_mm.add(d);
            sum_norm += sq.sqrt();
            views.entry((m.pixel.i as i32, m.pixel.j as i32)).or_default().add(sq);
            k += 1;
        }
        per_pose.push(PoseError {
            pose_id: pose.pose_id,
            count: pose_px.count,
            rms_px: pose_px.rms(2.0),
            rms_mm: pose_mm.rms(1.0),
        });
    }
    Ok(MetricReport {
        rms_reproj_px: total_px.rms(2.0),
        mean_reproj_px: if k == 0 { 0.0 } else { sum_norm / k as f64 },
        rms_ray_reproj_mm: total_mm.rms(1.0),
        per_view: views.into_iter().map(|((i, j), a)| ViewError { i, j, count: a.count, rms_px: a.rms(2.0) }).collect(),
        per_pose,
    })
}

impl MetricReport {
    /// `metric,scope,value` rows (with header).
    pub fn to_csv(&self) -> String {
        let mut out = String::from("metric,scope,value\n");
        let _ = writeln!(out, "rms_reproj_px,all,{:.16e}", self.rms_reproj_px);
        let _ = writeln!(out, "mean_reproj_px,all,{:.16e}", self.mean_reproj_px);
        let _ = writeln!(out, "rms_ray_reproj_mm,all,{:.16e}", self.rms_ray_reproj_mm);
        for p in &self.per_pose {
            let _ = writeln!(out, "rms_reproj_px,pose:{},{:.16e}", p.pose_id, p.rms_px);
            let _ = writeln!(out, "rms_ray_reproj_mm,pose:{},{:.16e}", p.pose_id, p.rms_mm);
        }
        for v in &self.per_view {
            let _ = writeln!(out, "rms_reproj_px,view:{}:{},{:.16e}", v.i, v.j, v.rms_px);
        }
        out
    }

    /// Per-view RMS laid out as a `rows × cols` table over the grid (`NaN`
    /// where a view has no observations).
    pub fn view_table(&self, grid: &ViewGrid) -> Vec<Vec<f64>> {
        let (ni, nj) = grid.size();
        let mut table = vec![vec![f64::NAN; ni]; nj];
        for v in &self.per_view {
            if grid.contains(v.i, v.j) {
                table[(v.j - grid.j_range[0]) as usize][(v.i - grid.i_range[0]) as usize] = v.rms_px;
            }
        }
        table
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExportedCorner {
    pub pose_id: u32,
    pub row: u32,
    pub col: u32,
    /// Camera-frame position in millimeters.
    pub position: [f64; 3],
}

/// Board corners of every pose in the camera frame plus eight frustum
/// vertices: the view-plane rectangle at `Z = 0` and the bounding rectangle
/// of all corners at their largest depth.
#[derive(Debug, Clone, PartialEq)]
pub struct PoseExport {
    pub corners: Vec<ExportedCorner>,
    pub frustum: Vec<[f64; 3]>,
}

pub fn export_poses(poses: &[(u32, Pose)], board: &BoardSpec, grid: &ViewGrid, k_i: f64, k_j: f64) -> PoseExport {
    let mut corners = Vec::with_capacity(poses.len() * board.corner_count());
    for (id, pose) in poses {
        for row in 0..board.rows {
            for col in 0..board.cols {
                let p = pose.board_to_camera(&board.corner(row, col)).coords * 1e3;
                corners.push(ExportedCorner { pose_id: *id, row, col, position: [p.x, p.y, p.z] });
            }
        }
    }
    let s = [grid.i_range[0] as f64 * k_i * 1e3, grid.i_range[1] as f64 * k_i * 1e3];
    let t = [grid.j_range[0] as f64 * k_j * 1e3, grid.j_range[1] as f64 * k_j * 1e3];
    let mut frustum = vec![[s[0], t[0], 0.0], [s[1], t[0], 0.0], [s[1], t[1], 0.0], [s[0], t[1], 0.0]];
    if !corners.is_empty() {
        let fold = |k: usize, f: fn(f64, f64) -> f64, init: f64| corners.iter().map(|c| c.position[k]).fold(init, f);
        let (x0, x1) = (fold(0, f64::min, f64::INFINITY), fold(0, f64::max, f64::NEG_INFINITY));
        let (y0, y1) = (fold(1, f64::min, f64::INFINITY), fold(1, f64::max, f64::NEG_INFINITY));
        let z = corners.iter().map(|c| c.position[2]).fold(0.0f64, |a, b| if b.abs() > a.abs() { b } else { a });
        frustum.extend([[x0, y0, z], [x1, y0, z], [x1, y1, z], [x0, y1, z]]);
    }
    PoseExport { corners, frustum }
}

impl PoseExport {
    /// One record per line:
    /// `corner <pose_id> <row> <col> <x_mm> <y_mm> <z_mm>` and
    /// `frustum <index> <x_mm> <y_mm> <z_mm>`.
    pub fn to_text(&self) -> String {
        let mut out = String::from("# mpc pose export v1 (camera frame, mm)\n");
        for c in &self.corners {
            let [x, y, z] = c.position;
            let _ = writeln!(out, "corner {} {} {} {:.16e} {:.16e} {:.16e}", c.pose_id, c.row, c.col, x, y, z);
        }
        for (k, [x, y, z]) in self.frustum.iter().enumerate() {
            let _ = writeln!(out, "frustum {k} {x:.16e} {y:.16e} {z:.16e}");
        }
        out
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut corners = Vec::new();
        let mut frustum = Vec::new();
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let bad = |what: &str| Error::Parse(format!("line {}: {what}", n + 1));
            let fields: Vec<&str> = line.split_whitespace().collect();
            let float = |s: &str| s.parse::<f64>().map_err(|_| bad("invalid number"));
            let int = |s: &str| s.parse::<u32>().map_err(|_| bad("invalid integer"));
            match fields.as_slice() {
                ["corner", id, row, col, x, y, z] => corners.push(ExportedCorner {
                    pose_id: int(id)?,
                    row: int(row)?,
                    col: int(col)?,
                    position: [float(x)?, float(y)?, float(z)?],
                }),
                ["frustum", k, x, y, z] => {
                    if int(k)? as usize != frustum.len() {
                        return Err(bad("frustum vertices out of order"));
                    }
                    frustum.push([float(x)?, float(y)?, float(z)?]);
                }
                _ => return Err(bad("unrecognized record")),
            }
        }
        Ok(PoseExport { corners, frustum })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text())
            .map_err(|e| Error::Io { path: path.display().to_string(), message: e.to_string() })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn point_line_distance_oracle() {
        let p = Vector3::new(0.0, 0.0, 100.0);
        let o = Vector3::zeros();
        assert_eq!(point_to_ray_distance(&p, &o, &Vector3::new(0.0, 0.0, 1.0)), 0.0);
        let d = point_to_ray_distance(&p, &o, &Vector3::new(0.01, 0.0, 1.0));
        assert!((d - 100.0 * 0.01f64.atan().sin()).abs() < 1e-12);
        assert!((d - 0.99995).abs() < 1e-5);
        let scaled = point_to_ray_distance(&p, &o, &Vector3::new(0.03, 0.0, 3.0));
        assert!((scaled - d).abs() < 1e-12);
    }

    #[test]
    fn export_single_pose() {
        let board = BoardSpec::new(3, 4, 3.51).unwrap();
        let pose = Pose::new(Vector3::zeros(), Vector3::new(0.0, 0.0, 0.2));
        let grid = ViewGrid::centered(7, 7);
        let ex = export_poses(&[(0, pose)], &board, &grid, 2.4e-4, 2.5e-4);
        assert_eq!(ex.corners.len(), 12);
        assert_eq!(ex.corners[0].position, [0.0, 0.0, 200.0]);
        assert_eq!(ex.frustum.len(), 8);
        assert_eq!(PoseExport::parse(&ex.to_text()).unwrap(), ex);
    }

    #[test]
    fn parse_rejects_garbage() {
        assert!(PoseExport::parse("corner 0 0 0 1 2").is_err());
        assert!(PoseExport::parse("frustum 1 0 0 0").is_err());
        assert!(PoseExport::parse("corner 0 0 0 x 2 3").is_err());
        assert_eq!(PoseExport::parse("# only a comment\n\n").unwrap().corners.len(), 0);
    }
}
