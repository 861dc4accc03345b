//! Synthetic checkerboard captures from a known camera, and Monte-Carlo
//! calibration trials over them.

use std::fmt::Write as _;

use nalgebra::Vector3;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::camera::{Distortion, Intrinsics};
use crate::dataset::{BoardSpec, CalibrationDataset, CameraKind, Corner, PoseObservations, ViewGrid, ViewObservations};
use crate::error::{Error, Result};
use crate::geometry::Ray;
use crate::pipeline::{calibrate, CalibrateOptions};
use crate::pose::Pose;
use crate::rotation::from_euler_xyz;

pub const MAX_POSE_ATTEMPTS: usize = 100;

/// Sampling box for board translations (position of corner `(0, 0)`), in
/// millimeters. `z` is a depth magnitude; its sign follows the camera kind.
///
/// The default keeps the 12×12, 3.51 mm board within ±5 mm of the optical
/// axis at 60 to 100 mm depth, where it spans most of a 320-pixel view.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TranslationRange {
    pub x: [f64; 2],
    pub y: [f64; 2],
    pub z: [f64; 2],
}

impl Default for TranslationRange {
    fn default() -> Self {
        TranslationRange { x: [-24.0, -14.0], y: [-24.0, -14.0], z: [60.0, 100.0] }
    }
}

fn default_rotation_range() -> f64 {
    30.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    pub intrinsics: Intrinsics,
    #[serde(default)]
    pub distortion: Distortion,
    pub board: BoardSpec,
    #[serde(default)]
    pub camera_kind: CameraKind,
    pub n_poses: usize,
    /// View grid `[rows, cols]`, centered on zero.
    pub view_grid: [u32; 2],
    /// Pixel noise standard deviation.
    pub noise_sigma: f64,
    /// Per-axis Euler angle range `±deg`.
    #[serde(default = "default_rotation_range")]
    pub rotation_range_deg: f64,
    #[serde(default)]
    pub translation_range_mm: TranslationRange,
    /// Intrinsic XYZ Euler angles in degrees, one triple per pose; replaces
    /// rotation sampling when non-empty.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub fixed_rotations_deg: Vec<[f64; 3]>,
    #[serde(default)]
    pub seed: u64,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            intrinsics: Intrinsics { k_i: 2.4e-4, k_j: 2.5e-4, k_u: 2.0e-3, k_v: 1.9e-3, u0: -0.32, v0: -0.33 },
            distortion: Distortion::default(),
            board: BoardSpec { rows: 12, cols: 12, cell_mm: 3.51 },
            camera_kind: CameraKind::Conventional,
            n_poses: 3,
            view_grid: [7, 7],
            noise_sigma: 0.0,
            rotation_range_deg: default_rotation_range(),
            translation_range_mm: TranslationRange::default(),
            fixed_rotations_deg: Vec::new(),
            seed: 0,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::ConfigInvalid(m));
        self.intrinsics.validate().or_else(|e| bad(e.to_string()))?;
        self.board.validate().or_else(|e| bad(e.to_string()))?;
        if self.distortion.to_array().iter().any(|v| !v.is_finite()) {
            return bad("distortion must be finite".into());
        }
        if self.n_poses == 0 {
            return bad("n_poses must be at least 1".into());
        }
        if self.view_grid.iter().any(|&n| n < 2) {
            return bad(format!("view_grid dimensions must be >= 2, got {:?}", self.view_grid));
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return bad(format!("noise_sigma must be >= 0, got {}", self.noise_sigma));
        }
        if !(self.rotation_range_deg > 0.0 && self.rotation_range_deg < 90.0) {
            return bad(format!("rotation_range_deg must lie in (0, 90), got {}", self.rotation_range_deg));
        }
        let tr = &self.translation_range_mm;
        for (name, r) in [("x", tr.x), ("y", tr.y), ("z", tr.z)] {
            if !(r[0].is_finite() && r[1].is_finite() && r[0] <= r[1]) {
                return bad(format!("translation_range_mm.{name} must be an ordered finite pair"));
            }
        }
        if !(tr.z[0] > 0.0) {
            return bad("translation_range_mm.z must be positive (depth magnitude)".into());
        }
        if !self.fixed_rotations_deg.is_empty() && self.fixed_rotations_deg.len() != self.n_poses {
            return bad(format!(
                "fixed_rotations_deg has {} entries for {} poses",
                self.fixed_rotations_deg.len(),
                self.n_poses
            ));
        }
        Ok(())
    }

    pub fn grid(&self) -> ViewGrid {
        ViewGrid::centered(self.view_grid[0], self.view_grid[1])
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: SimConfig = serde_json::from_str(text).map_err(|e| Error::ConfigInvalid(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    pub intrinsics: Intrinsics,
    pub distortion: Distortion,
    pub poses: Vec<Pose>,
}

fn sample_pose(config: &SimConfig, p: usize, rng: &mut ChaCha8Rng) -> Pose {
    let deg = std::f64::consts::PI / 180.0;
    let angles = match config.fixed_rotations_deg.get(p) {
        Some(a) => *a,
        None => {
            let r = config.rotation_range_deg;
            [rng.random_range(-r..=r), rng.random_range(-r..=r), rng.random_range(-r..=r)]
        }
    };
    let rot = from_euler_xyz(angles[0] * deg, angles[1] * deg, angles[2] * deg);
    let tr = &config.translation_range_mm;
    let t = Vector3::new(
        rng.random_range(tr.x[0]..=tr.x[1]),
        rng.random_range(tr.y[0]..=tr.y[1]),
        rng.random_range(tr.z[0]..=tr.z[1]) * config.camera_kind.depth_sign(),
    ) * 1e-3;
    Pose::from_matrix(&rot, t)
}

/// Render one pose; `None` when every corner falls behind the camera.
fn render_pose(
    config: &SimConfig,
    pose: &Pose,
    pose_id: u32,
    noise: Option<&Normal<f64>>,
    rng: &mut ChaCha8Rng,
) -> Option<PoseObservations> {
    let intr = &config.intrinsics;
    let sign = config.camera_kind.depth_sign();
    let board = &config.board;
    let points: Vec<_> = (0..board.rows)
        .flat_map(|row| (0..board.cols).map(move |col| (row, col)))
        .map(|(row, col)| (row, col, pose.board_to_camera(&board.corner(row, col))))
        .collect();
    if points.iter().all(|(_, _, x)| x.z * sign <= 0.0) {
        return None;
    }
    let mut observations = Vec::new();
    for (i, j) in config.grid().views() {
        let (s, t) = (intr.k_i * i as f64, intr.k_j * j as f64);
        let mut corners = Vec::with_capacity(points.len());
        for &(row, col, x) in &points {
            if x.z * sign <= 0.0 {
                continue;
            }
            let Ok(mut ray) = Ray::through(&x, s, t, 1.0) else { continue };
            let Ok((xd, yd)) = config.distortion.distort(ray.x, ray.y, s, t) else { continue };
            (ray.x, ray.y) = (xd, yd);
            let px = intr.encode(&ray);
            let (mut u, mut v) = (px.u, px.v);
            if let Some(n) = noise {
                u += n.sample(rng);
                v += n.sample(rng);
            }
            corners.push(Corner { row, col, u, v });
        }
        if !corners.is_empty() {
            observations.push(ViewObservations { i, j, corners });
        }
    }
    Some(PoseObservations { pose_id, observations })
}

/// Simulate a dataset; the same config (including seed) gives identical output.
pub fn generate(config: &SimConfig) -> Result<(CalibrationDataset, GroundTruth)> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let noise = (config.noise_sigma > 0.0).then(|| Normal::new(0.0, config.noise_sigma).expect("validated sigma"));
    let mut poses = Vec::with_capacity(config.n_poses);
    let mut blocks = Vec::with_capacity(config.n_poses);
    for p in 0..config.n_poses {
        let mut attempt = 0;
        let (pose, block) = loop {
            if attempt == MAX_POSE_ATTEMPTS {
                return Err(Error::AllPointsBehindCamera { pose: p, attempts: attempt });
            }
            attempt += 1;
            let pose = sample_pose(config, p, &mut rng);
            if let Some(block) = render_pose(config, &pose, p as u32, noise.as_ref(), &mut rng) {
                break (pose, block);
            }
        };
        poses.push(pose);
        blocks.push(block);
    }
    let dataset = CalibrationDataset {
        board: config.board,
        camera_kind: config.camera_kind,
        view_grid: config.grid(),
        rectified: false,
        poses: blocks,
    };
    let truth = GroundTruth { intrinsics: config.intrinsics, distortion: config.distortion, poses };
    Ok((dataset, truth))
}

/// Seed of trial `index`, derived from the master seed.
pub fn trial_seed(master: u64, index: usize) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(master);
    rng.set_stream(index as u64);
    rng.next_u64()
}

fn relative_errors(est: &Intrinsics, truth: &Intrinsics) -> [f64; 6] {
    let (e, t) = (est.to_array(), truth.to_array());
    std::array::from_fn(|k| (e[k] - t[k]).abs() / t[k].abs())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialResult {
    pub linear: Intrinsics,
    pub estimate: Intrinsics,
    pub distortion: Distortion,
    /// Relative errors of the final estimate, in `Intrinsics::NAMES` order.
    pub rel_err: [f64; 6],
    pub linear_rel_err: [f64; 6],
    /// Absolute principal-point error in pixels.
    pub principal_point_err_px: [f64; 2],
    pub initial_rms_px: f64,
    pub final_rms_px: f64,
    pub initial_rms_mm: f64,
    pub final_rms_mm: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub seed: u64,
    pub outcome: std::result::Result<TrialResult, String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamStats {
    pub param: String,
    pub mean_rel_err: f64,
    pub std_rel_err: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialSummary {
    pub sigma: f64,
    pub n_poses: usize,
    pub n_views: usize,
    pub trials: Vec<TrialRecord>,
    pub stats: Vec<ParamStats>,
    pub fail_rate: f64,
}

impl TrialSummary {
    pub fn successes(&self) -> impl Iterator<Item = &TrialResult> {
        self.trials.iter().filter_map(|t| t.outcome.as_ref().ok())
    }

    pub fn mean_rel_err(&self, param: &str) -> Option<f64> {
        self.stats.iter().find(|s| s.param == param).map(|s| s.mean_rel_err)
    }

    /// Mean absolute principal-point error `(u, v)` in pixels.
    pub fn mean_principal_point_err_px(&self) -> [f64; 2] {
        let (n, sum) = self.successes().fold((0usize, [0.0; 2]), |(n, s), r| {
            (n + 1, [s[0] + r.principal_point_err_px[0], s[1] + r.principal_point_err_px[1]])
        });
        if n == 0 {
            [f64::NAN; 2]
        } else {
            [sum[0] / n as f64, sum[1] / n as f64]
        }
    }
}

fn run_trial(config: &SimConfig, options: &CalibrateOptions) -> Result<TrialResult> {
    let (dataset, truth) = generate(config)?;
    let cal = calibrate(&dataset, options)?;
    let estimate = cal.params().intrinsics();
    let (pe, pt) = (estimate.principal_point(), truth.intrinsics.principal_point());
    Ok(TrialResult {
        linear: cal.linear.intrinsics,
        estimate,
        distortion: cal.params().distortion(),
        rel_err: relative_errors(&estimate, &truth.intrinsics),
        linear_rel_err: relative_errors(&cal.linear.intrinsics, &truth.intrinsics),
        principal_point_err_px: [(pe.0 - pt.0).abs(), (pe.1 - pt.1).abs()],
        initial_rms_px: cal.initial_metrics.rms_reproj_px,
        final_rms_px: cal.final_metrics().rms_reproj_px,
        initial_rms_mm: cal.initial_metrics.rms_ray_reproj_mm,
        final_rms_mm: cal.final_metrics().rms_ray_reproj_mm,
    })
}

/// Run `n_trials` independent simulate-and-calibrate trials in parallel.
/// Failed trials are recorded, not propagated.
pub fn run_trials(config: &SimConfig, n_trials: usize, options: &CalibrateOptions) -> Result<TrialSummary> {
    config.validate()?;
    if n_trials == 0 {
        return Err(Error::ConfigInvalid("n_trials must be at least 1".into()));
    }
    let trials: Vec<TrialRecord> = (0..n_trials)
        .into_par_iter()
        .map(|k| {
            let seed = trial_seed(config.seed, k);
            let cfg = SimConfig { seed, ..config.clone() };
            let outcome = run_trial(&cfg, options).map_err(|e| e.to_string());
            if let Err(e) = &outcome {
                log::warn!("trial {k} (seed {seed}) failed: {e}");
            }
            TrialRecord { seed, outcome }
        })
        .collect();
    let ok: Vec<&TrialResult> = trials.iter().filter_map(|t| t.outcome.as_ref().ok()).collect();
    let stats = Intrinsics::NAMES
        .iter()
        .enumerate()
        .map(|(k, name)| {
            let values: Vec<f64> = ok.iter().map(|r| r.rel_err[k]).collect();
            let (mean, std) = mean_std(&values);
            ParamStats { param: name.to_string(), mean_rel_err: mean, std_rel_err: std }
        })
        .collect();
    Ok(TrialSummary {
        sigma: config.noise_sigma,
        n_poses: config.n_poses,
        n_views: (config.view_grid[0] * config.view_grid[1]) as usize,
        fail_rate: (n_trials - ok.len()) as f64 / n_trials as f64,
        trials,
        stats,
    })
}

/// Mean and sample standard deviation (`NaN` mean when empty).
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, var.sqrt())
}

/// Aggregate statistics as CSV, one row per (summary, parameter).
pub fn stats_csv(summaries: &[TrialSummary]) -> String {
    let mut out = String::from("sigma,n_poses,n_views,param,mean_rel_err,std_rel_err,fail_rate\n");
    for s in summaries {
        for p in &s.stats {
            let _ = writeln!(
                out,
                "{},{},{},{},{:.16e},{:.16e},{}",
                s.sigma, s.n_poses, s.n_views, p.param, p.mean_rel_err, p.std_rel_err, s.fail_rate
            );
        }
    }
    out
}
