use nalgebra::{Matrix3, Vector2, Vector3};
use serde::{Deserialize, Serialize};

use crate::geometry::Point3;
use crate::rotation::{angle_between, rodrigues, rodrigues_inv};

/// Rigid board-to-camera motion `X_c = R · X_w + t`, with `R` stored as a
/// Rodrigues vector. Translation is in meters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pose {
    pub rotation: Vector3<f64>,
    pub translation: Vector3<f64>,
}

impl Pose {
    pub fn new(rotation: Vector3<f64>, translation: Vector3<f64>) -> Self {
        Pose { rotation, translation }
    }

    pub fn from_matrix(r: &Matrix3<f64>, translation: Vector3<f64>) -> Self {
        Pose { rotation: rodrigues_inv(r), translation }
    }

    pub fn rotation_matrix(&self) -> Matrix3<f64> {
        rodrigues(&self.rotation)
    }

    /// Camera-frame position of a board point (`Z_w = 0`).
    pub fn board_to_camera(&self, board: &Vector2<f64>) -> Point3 {
        let r = self.rotation_matrix();
        Point3::from(r.column(0) * board.x + r.column(1) * board.y + self.translation)
    }

    /// Rotation angle (radians) and translation distance to another pose.
    pub fn difference(&self, other: &Pose) -> (f64, f64) {
        (
            angle_between(&self.rotation_matrix(), &other.rotation_matrix()),
            (self.translation - other.translation).norm(),
        )
    }
}
