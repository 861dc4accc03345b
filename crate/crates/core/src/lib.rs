//! Multi-projection-center light field camera model: ray geometry,
//! projective ray transforms, decoding and distortion, closed-form and
//! nonlinear calibration, a synthetic data simulator, and error metrics.

// `!(x > tol)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod camera;
pub mod dataset;
pub mod error;
pub mod geometry;
pub mod io;
mod linalg;
pub mod linear;
pub mod metrics;
pub mod pipeline;
pub mod pose;
pub mod refine;
pub mod rotation;
pub mod simulator;
pub mod transforms;

pub use camera::{Distortion, Intrinsics};
pub use dataset::{BoardSpec, CalibrationDataset, CameraKind, ViewGrid};
pub use error::{Error, Result};
pub use geometry::{PixelIndex, Point3, Ray};
pub use io::CalibrationResult;
pub use linear::{linear_calibrate, LinearCalibration};
pub use pipeline::{calibrate, rectify_dataset, CalibrateOptions, Calibration};
pub use pose::Pose;
pub use refine::{optimize, LmOptions, LmReport, ParameterVector};
pub use simulator::{generate, run_trials, GroundTruth, SimConfig};
