//! Linear initialization followed by joint refinement, and dataset
//! rectification with an estimated distortion.

use crate::camera::{Distortion, Intrinsics};
use crate::dataset::{CalibrationDataset, CameraKind};
use crate::error::Result;
use crate::linear::{linear_calibrate, LinearCalibration};
use crate::metrics::{evaluate, MetricReport};
use crate::refine::{optimize_with_fixed, LmOptions, LmReport, ParameterVector, DISTORTION_INDICES};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CalibrateOptions {
    /// Overrides the dataset's camera kind.
    pub kind: Option<CameraKind>,
    pub skip_refine: bool,
    /// Refine the distortion vector; when false it stays zero.
    pub estimate_distortion: bool,
    pub lm: LmOptions,
}

impl Default for CalibrateOptions {
    fn default() -> Self {
        CalibrateOptions { kind: None, skip_refine: false, estimate_distortion: true, lm: LmOptions::default() }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Refinement {
    pub params: ParameterVector,
    pub report: LmReport,
    pub metrics: MetricReport,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Calibration {
    pub kind: CameraKind,
    pub linear: LinearCalibration,
    /// Linear estimate with zero distortion.
    pub initial: ParameterVector,
    pub initial_metrics: MetricReport,
    pub refined: Option<Refinement>,
    /// True when the distortion vector was a free parameter of the refinement.
    pub distortion_estimated: bool,
}

impl Calibration {
    pub fn params(&self) -> &ParameterVector {
        self.refined.as_ref().map_or(&self.initial, |r| &r.params)
    }

    pub fn final_metrics(&self) -> &MetricReport {
        self.refined.as_ref().map_or(&self.initial_metrics, |r| &r.metrics)
    }
}

pub fn calibrate(dataset: &CalibrationDataset, options: &CalibrateOptions) -> Result<Calibration> {
    let kind = options.kind.unwrap_or(dataset.camera_kind);
    let linear = linear_calibrate(dataset, kind)?;
    let initial = ParameterVector::from_parts(&linear.intrinsics, &Distortion::default(), &linear.poses);
    let initial_metrics = evaluate(&initial, dataset)?;
    let refined = if options.skip_refine {
        None
    } else {
        let fixed: &[usize] = if options.estimate_distortion { &[] } else { &DISTORTION_INDICES };
        let (params, report) = optimize_with_fixed(&initial, dataset, &options.lm, fixed)?;
        let metrics = evaluate(&params, dataset)?;
        Some(Refinement { params, report, metrics })
    };
    let distortion_estimated = refined.is_some() && options.estimate_distortion;
    Ok(Calibration { kind, linear, initial, initial_metrics, refined, distortion_estimated })
}

/// Replace each observation by its rectified pixel: decode, undistort,
/// re-encode. Applying it twice is not the same as applying it once.
pub fn rectify_dataset(
    dataset: &CalibrationDataset,
    intrinsics: &Intrinsics,
    distortion: &Distortion,
) -> CalibrationDataset {
    let mut out = dataset.clone();
    for pose in &mut out.poses {
        for view in &mut pose.observations {
            for c in &mut view.corners {
                let px = crate::geometry::PixelIndex::new(view.i as f64, view.j as f64, c.u, c.v);
                let mut ray = intrinsics.decode(&px);
                (ray.x, ray.y) = distortion.undistort(ray.x, ray.y, ray.s, ray.t);
                let back = intrinsics.encode(&ray);
                c.u = back.u;
                c.v = back.v;
            }
        }
    }
    out.rectified = true;
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simulator::{generate, SimConfig};

    fn distorted() -> Distortion {
        Distortion { k1: -0.08, k2: 0.03, k3: 0.6, k4: -0.5 }
    }

    #[test]
    fn rectify_with_zero_distortion_is_identity() {
        let (ds, truth) = generate(&SimConfig { noise_sigma: 0.2, ..SimConfig::default() }).unwrap();
        let out = rectify_dataset(&ds, &truth.intrinsics, &Distortion::default());
        assert!(out.rectified);
        for (a, b) in ds.poses.iter().zip(&out.poses) {
            for (va, vb) in a.observations.iter().zip(&b.observations) {
                for (ca, cb) in va.corners.iter().zip(&vb.corners) {
                    assert!((ca.u - cb.u).abs() < 1e-9 && (ca.v - cb.v).abs() < 1e-9);
                }
            }
        }
    }

    #[test]
    fn rectify_removes_known_distortion_and_is_not_idempotent() {
        let cfg = SimConfig { distortion: distorted(), ..SimConfig::default() };
        let (ds, truth) = generate(&cfg).unwrap();
        let clean = generate(&SimConfig { distortion: Distortion::default(), ..cfg.clone() }).unwrap().0;
        let once = rectify_dataset(&ds, &truth.intrinsics, &truth.distortion);
        let twice = rectify_dataset(&once, &truth.intrinsics, &truth.distortion);
        let mut worst: f64 = 0.0;
        let mut moved: f64 = 0.0;
        for ((a, b), c) in once.poses.iter().zip(&clean.poses).zip(&twice.poses) {
            for ((va, vb), vc) in a.observations.iter().zip(&b.observations).zip(&c.observations) {
                for ((ca, cb), cc) in va.corners.iter().zip(&vb.corners).zip(&vc.corners) {
                    worst = worst.max((ca.u - cb.u).abs()).max((ca.v - cb.v).abs());
                    moved = moved.max((ca.u - cc.u).abs());
                }
            }
        }
        assert!(worst < 1e-8, "rectified differs from distortion-free render by {worst}");
        assert!(moved > 1e-3);
    }

    #[test]
    fn fixed_distortion_stays_zero() {
        let (ds, _) = generate(&SimConfig { noise_sigma: 0.3, ..SimConfig::default() }).unwrap();
        let opts = CalibrateOptions { estimate_distortion: false, ..CalibrateOptions::default() };
        let cal = calibrate(&ds, &opts).unwrap();
        assert!(cal.params().distortion().is_zero());
        assert!(!cal.distortion_estimated);
        assert!(cal.final_metrics().rms_reproj_px <= cal.initial_metrics.rms_reproj_px);
    }
}
