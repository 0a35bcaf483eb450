//! Error type shared by all calibration stages.

use crate::refine::RefineReport;
use thiserror::Error;

/// Errors raised by geometry construction, plane detection, the solvers and
/// dataset ingestion.
#[derive(Debug, Error)]
pub enum Error {
    /// A plane was constructed from a zero-length normal vector.
    #[error("invalid plane: normal vector has zero length")]
    InvalidPlane,

    /// A matrix handed to the SO(3) projection has rank < 2, so the nearest
    /// rotation is not unique.
    #[error("degenerate input: {0}")]
    DegenerateInput(String),

    /// A minimal RANSAC sample was collinear or coincident.
    #[error("degenerate sample: {0}")]
    DegenerateSample(String),

    /// RANSAC exhausted its iteration budget without reaching the required
    /// inlier ratio.
    #[error("plane detection failed: {0}")]
    DetectionFailure(String),

    /// Fewer observations than the solver needs.
    #[error("insufficient data: {0}")]
    InsufficientData(String),

    /// The rotation system of the closed-form solver has no well-separated
    /// nullspace (e.g. pure-translation motion or a static camera).
    #[error("degenerate motion: {0}")]
    DegenerateMotion(String),

    /// The observed camera-frame normals span fewer than 3 dimensions, so
    /// the translation is unrecoverable.
    #[error("degenerate normals: {0}")]
    DegenerateNormals(String),

    /// The dataset mixes observations taken from both sides of the plane,
    /// violating the consistent-orientation assumption.
    #[error("orientation inconsistency: {0}")]
    OrientationInconsistency(String),

    /// Gauss-Newton could not make progress even after damping escalation.
    #[error("optimization failure: {msg}")]
    OptimizationFailure { msg: String, report: RefineReport },

    /// A scene configuration admits no valid camera pose or point set.
    #[error("scene construction failed: {0}")]
    SceneConstruction(String),

    /// Malformed PLY, manifest or report content.
    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
