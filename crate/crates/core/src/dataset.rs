//! Calibration observations: board geometry plus per-pose, per-view corner
//! measurements in raw indexed-pixel coordinates.
//!
//! Board corner `(row, col)` sits at `(col · cell_mm, row · cell_mm, 0)` in
//! the board frame. Files carry millimeters; the library works in meters.

use std::collections::{BTreeMap, HashSet};

use nalgebra::Vector2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::PixelIndex;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoardSpec {
    pub rows: u32,
    pub cols: u32,
    pub cell_mm: f64,
}

impl BoardSpec {
    pub fn new(rows: u32, cols: u32, cell_mm: f64) -> Result<Self> {
        let b = BoardSpec { rows, cols, cell_mm };
        b.validate()?;
        Ok(b)
    }

    pub fn validate(&self) -> Result<()> {
        if self.rows < 2 || self.cols < 2 {
            return Err(Error::InvalidDataset(format!(
                "board must have at least 2x2 corners, got {}x{}",
                self.rows, self.cols
            )));
        }
        if !(self.cell_mm > 0.0 && self.cell_mm.is_finite()) {
            return Err(Error::InvalidDataset(format!("cell_mm must be positive, got {}", self.cell_mm)));
        }
        Ok(())
    }

    /// Board-frame corner position in meters.
    pub fn corner(&self, row: u32, col: u32) -> Vector2<f64> {
        let cell = self.cell_mm * 1e-3;
        Vector2::new(col as f64 * cell, row as f64 * cell)
    }

    pub fn corner_count(&self) -> usize {
        self.rows as usize * self.cols as usize
    }
}

/// Light path design; decides the sign of the recovered board depth.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CameraKind {
    #[default]
    Conventional,
    FocusedLongPath,
    FocusedShortPath,
}

impl CameraKind {
    /// Sign of `t_z` for boards in front of the camera.
    pub fn depth_sign(self) -> f64 {
        match self {
            CameraKind::Conventional | CameraKind::FocusedShortPath => 1.0,
            CameraKind::FocusedLongPath => -1.0,
        }
    }
}

impl std::str::FromStr for CameraKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "conventional" => Ok(CameraKind::Conventional),
            "focused_long_path" | "focused-long-path" => Ok(CameraKind::FocusedLongPath),
            "focused_short_path" | "focused-short-path" => Ok(CameraKind::FocusedShortPath),
            other => Err(Error::Parse(format!("unknown camera kind `{other}`"))),
        }
    }
}

/// Inclusive view-index ranges.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ViewGrid {
    pub i_range: [i32; 2],
    pub j_range: [i32; 2],
}

impl ViewGrid {
    /// `rows × cols` views centered on zero: `−⌊n/2⌋ ..= n − 1 − ⌊n/2⌋`.
    pub fn centered(rows: u32, cols: u32) -> Self {
        let range = |n: u32| {
            let lo = -((n / 2) as i32);
            [lo, lo + n as i32 - 1]
        };
        ViewGrid { i_range: range(cols), j_range: range(rows) }
    }

    pub fn contains(&self, i: i32, j: i32) -> bool {
        (self.i_range[0]..=self.i_range[1]).contains(&i) && (self.j_range[0]..=self.j_range[1]).contains(&j)
    }

    pub fn views(&self) -> impl Iterator<Item = (i32, i32)> + '_ {
        (self.j_range[0]..=self.j_range[1]).flat_map(move |j| (self.i_range[0]..=self.i_range[1]).map(move |i| (i, j)))
    }

    pub fn size(&self) -> (usize, usize) {
        (
            (self.i_range[1] - self.i_range[0] + 1).max(0) as usize,
            (self.j_range[1] - self.j_range[0] + 1).max(0) as usize,
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Corner {
    pub row: u32,
    pub col: u32,
    pub u: f64,
    pub v: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ViewObservations {
    pub i: i32,
    pub j: i32,
    pub corners: Vec<Corner>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PoseObservations {
    pub pose_id: u32,
    pub observations: Vec<ViewObservations>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CalibrationDataset {
    pub board: BoardSpec,
    pub camera_kind: CameraKind,
    pub view_grid: ViewGrid,
    #[serde(default)]
    pub rectified: bool,
    pub poses: Vec<PoseObservations>,
}

/// One flattened measurement of a board corner in one view.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Measurement {
    pub row: u32,
    pub col: u32,
    /// Board-frame corner position (`Z_w = 0`).
    pub board: Vector2<f64>,
    pub pixel: PixelIndex,
}

impl CalibrationDataset {
    pub fn validate(&self) -> Result<()> {
        self.board.validate()?;
        let g = &self.view_grid;
        if g.i_range[0] > g.i_range[1] || g.j_range[0] > g.j_range[1] {
            return Err(Error::InvalidDataset("empty view grid".into()));
        }
        let mut pose_ids = HashSet::new();
        for pose in &self.poses {
            if !pose_ids.insert(pose.pose_id) {
                return Err(Error::InvalidDataset(format!("duplicate pose_id {}", pose.pose_id)));
            }
            let mut keys = HashSet::new();
            for view in &pose.observations {
                if !g.contains(view.i, view.j) {
                    return Err(Error::InvalidDataset(format!(
                        "pose {}: view ({}, {}) outside the view grid",
                        pose.pose_id, view.i, view.j
                    )));
                }
                for c in &view.corners {
                    if c.row >= self.board.rows || c.col >= self.board.cols {
                        return Err(Error::InvalidDataset(format!(
                            "pose {}: corner ({}, {}) outside the {}x{} board",
                            pose.pose_id, c.row, c.col, self.board.rows, self.board.cols
                        )));
                    }
                    if !(c.u.is_finite() && c.v.is_finite()) {
                        return Err(Error::InvalidDataset(format!("pose {}: non-finite pixel", pose.pose_id)));
                    }
                    if !keys.insert((view.i, view.j, c.row, c.col)) {
                        return Err(Error::InvalidDataset(format!(
                            "pose {}: duplicate observation of corner ({}, {}) in view ({}, {})",
                            pose.pose_id, c.row, c.col, view.i, view.j
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    pub fn pose_count(&self) -> usize {
        self.poses.len()
    }

    /// All measurements of pose `p` (by position) in file order.
    pub fn measurements(&self, p: usize) -> impl Iterator<Item = Measurement> + '_ {
        let board = self.board;
        self.poses[p].observations.iter().flat_map(move |view| {
            view.corners.iter().map(move |c| Measurement {
                row: c.row,
                col: c.col,
                board: board.corner(c.row, c.col),
                pixel: PixelIndex::new(view.i as f64, view.j as f64, c.u, c.v),
            })
        })
    }

    pub fn measurement_count(&self) -> usize {
        self.poses.iter().flat_map(|p| &p.observations).map(|v| v.corners.len()).sum()
    }

    /// Measurements of pose `p` grouped by board corner, in corner order.
    pub fn by_corner(&self, p: usize) -> BTreeMap<(u32, u32), Vec<Measurement>> {
        let mut map: BTreeMap<(u32, u32), Vec<Measurement>> = BTreeMap::new();
        for m in self.measurements(p) {
            map.entry((m.row, m.col)).or_default().push(m);
        }
        map
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let ds: CalibrationDataset = serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        ds.validate()?;
        Ok(ds)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("dataset serializes")
    }
}
