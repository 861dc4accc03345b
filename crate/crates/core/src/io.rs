//! Calibration result and ground-truth files (JSON).
//!
//! Pose translations are stored in millimeters; rotations are Rodrigues
//! vectors in radians.

use serde::{Deserialize, Serialize};

use crate::camera::{Distortion, Intrinsics};
use crate::dataset::{CalibrationDataset, CameraKind};
use crate::error::{Error, Result};
use crate::metrics::{evaluate, MetricReport};
use crate::pipeline::Calibration;
use crate::pose::Pose;
use crate::refine::{LmReport, ParameterVector};
use crate::simulator::GroundTruth;

pub const TOOL_VERSION: &str = concat!(env!("CARGO_PKG_NAME"), " ", env!("CARGO_PKG_VERSION"));

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PoseRecord {
    pub pose_id: u32,
    pub rotation: [f64; 3],
    pub translation_mm: [f64; 3],
}

impl PoseRecord {
    pub fn new(pose_id: u32, pose: &Pose) -> Self {
        let t = pose.translation * 1e3;
        PoseRecord { pose_id, rotation: pose.rotation.into(), translation_mm: [t.x, t.y, t.z] }
    }

    pub fn pose(&self) -> Pose {
        Pose::new(self.rotation.into(), nalgebra::Vector3::from(self.translation_mm) * 1e-3)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetricSummary {
    pub rms_px: f64,
    pub mean_px: f64,
    pub rms_mm: f64,
}

impl From<&MetricReport> for MetricSummary {
    fn from(m: &MetricReport) -> Self {
        MetricSummary { rms_px: m.rms_reproj_px, mean_px: m.mean_reproj_px, rms_mm: m.rms_ray_reproj_mm }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ResultMetrics {
    pub initial: MetricSummary,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub optimized: Option<MetricSummary>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CalibrationResult {
    pub tool_version: String,
    pub input_digest: String,
    pub camera_kind: CameraKind,
    pub intrinsics: Intrinsics,
    pub distortion: Distortion,
    /// False when refinement was skipped; `distortion` is then all zero.
    pub distortion_estimated: bool,
    pub poses: Vec<PoseRecord>,
    pub metrics: ResultMetrics,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub optimizer: Option<LmReport>,
}

impl CalibrationResult {
    pub fn from_calibration(cal: &Calibration, dataset: &CalibrationDataset, input_digest: &str) -> Self {
        let params = cal.params();
        let refined = cal.refined.as_ref();
        CalibrationResult {
            tool_version: TOOL_VERSION.to_string(),
            input_digest: input_digest.to_string(),
            camera_kind: cal.kind,
            intrinsics: params.intrinsics(),
            distortion: params.distortion(),
            distortion_estimated: cal.distortion_estimated,
            poses: dataset
                .poses
                .iter()
                .zip(params.poses())
                .map(|(p, pose)| PoseRecord::new(p.pose_id, &pose))
                .collect(),
            metrics: ResultMetrics {
                initial: (&cal.initial_metrics).into(),
                optimized: refined.map(|r| (&r.metrics).into()),
            },
            optimizer: refined.map(|r| r.report.clone()),
        }
    }

    /// Ground-truth sidecar of a simulated dataset; metrics are those of the
    /// true parameters on the (noisy) observations.
    pub fn from_ground_truth(truth: &GroundTruth, dataset: &CalibrationDataset, input_digest: &str) -> Result<Self> {
        let params = ParameterVector::from_parts(&truth.intrinsics, &truth.distortion, &truth.poses);
        let metrics = evaluate(&params, dataset)?;
        Ok(CalibrationResult {
            tool_version: TOOL_VERSION.to_string(),
            input_digest: input_digest.to_string(),
            camera_kind: dataset.camera_kind,
            intrinsics: truth.intrinsics,
            distortion: truth.distortion,
            distortion_estimated: true,
            poses: dataset.poses.iter().zip(&truth.poses).map(|(p, pose)| PoseRecord::new(p.pose_id, pose)).collect(),
            metrics: ResultMetrics { initial: (&metrics).into(), optimized: None },
            optimizer: None,
        })
    }

    pub fn params(&self) -> ParameterVector {
        let poses: Vec<Pose> = self.poses.iter().map(PoseRecord::pose).collect();
        ParameterVector::from_parts(&self.intrinsics, &self.distortion, &poses)
    }

    pub fn validate(&self) -> Result<()> {
        self.intrinsics.validate()?;
        let finite = self.distortion.to_array().iter().all(|v| v.is_finite())
            && self.poses.iter().all(|p| p.rotation.iter().chain(&p.translation_mm).all(|v| v.is_finite()));
        if !finite {
            return Err(Error::Parse("result contains non-finite values".into()));
        }
        if !self.distortion_estimated && !self.distortion.is_zero() {
            return Err(Error::Parse("distortion must be zero when not estimated".into()));
        }
        Ok(())
    }

    /// Pose ids must match the dataset's, in order.
    pub fn check_consistent(&self, dataset: &CalibrationDataset) -> Result<()> {
        let ours: Vec<u32> = self.poses.iter().map(|p| p.pose_id).collect();
        let theirs: Vec<u32> = dataset.poses.iter().map(|p| p.pose_id).collect();
        if ours != theirs {
            return Err(Error::Inconsistent(format!(
                "result pose ids {ours:?} do not match dataset pose ids {theirs:?}"
            )));
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let r: CalibrationResult = serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        r.validate()?;
        Ok(r)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("result serializes")
    }
}
