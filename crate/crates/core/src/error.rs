use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("degenerate projection: point depth {z:e} lies on the view plane")]
    DegenerateProjection { z: f64 },

    #[error("invalid ray: {0}")]
    InvalidRay(String),

    #[error("rays have different plane spacing ({0} vs {1})")]
    SpacingMismatch(f64, f64),

    #[error("rays are parallel and do not meet at a finite point")]
    ParallelRays,

    #[error("{what} is rank deficient (singular value ratio {ratio:e})")]
    RankDeficient { what: &'static str, ratio: f64 },

    #[error("invalid plane spacing: f = {0}, f' = {1}")]
    InvalidSpacing(f64, f64),

    #[error("scale factors violate k_s/k_t = k_x/k_y ({lhs} vs {rhs})")]
    AspectMismatch { lhs: f64, rhs: f64 },

    #[error("invalid intrinsics: {0}")]
    InvalidIntrinsics(String),

    #[error("distortion inversion did not converge after {iterations} iterations")]
    NoConvergence { iterations: usize },

    #[error("board points are collinear")]
    DegenerateBoard,

    #[error("board point {point} has fewer than two rays from distinct views")]
    InsufficientRays { point: usize },

    #[error("homography nullspace is ambiguous (singular value ratio {ratio:e})")]
    NullspaceAmbiguous { ratio: f64 },

    #[error("B matrix is not positive definite; add poses or reduce noise")]
    NotPositiveDefinite,

    #[error("homography has zero scale")]
    ZeroScale,

    #[error("no parallax along {axis}: every usable view index is zero")]
    NoParallax { axis: char },

    #[error("insufficient poses: {found} found, at least 2 required")]
    InsufficientPoses { found: usize },

    #[error("non-finite residual or Jacobian at observation {observation}")]
    NonFinite { observation: usize },

    #[error("parameter vector has length {found}, expected {expected}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("invalid dataset: {0}")]
    InvalidDataset(String),

    #[error("invalid simulation config: {0}")]
    ConfigInvalid(String),

    #[error("pose {pose}: all board points behind the camera after {attempts} attempts")]
    AllPointsBehindCamera { pose: usize, attempts: usize },

    #[error("observation {observation}: {source}")]
    AtObservation {
        observation: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("pose {pose}: {source}")]
    AtPose {
        pose: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("parse error: {0}")]
    Parse(String),

    #[error("distortion was not estimated: {0}")]
    DistortionNotEstimated(String),

    #[error("inconsistent inputs: {0}")]
    Inconsistent(String),

    #[error("{path}: {message}")]
    Io { path: String, message: String },
}

impl Error {
    pub(crate) fn at_pose(self, pose: usize) -> Self {
        Error::AtPose { pose, source: Box::new(self) }
    }

    pub(crate) fn at_observation(self, observation: usize) -> Self {
        Error::AtObservation { observation, source: Box::new(self) }
    }
}
