//! Hand-eye calibration of a wrist-mounted depth camera from multi-view
//! observations of an arbitrary static plane.
//!
//! The pipeline runs in three stages. [`detect`] extracts the dominant plane
//! from each depth-camera point cloud with RANSAC. [`closed_form`] solves the
//! plane-constraint equations `Y = Mᵢ·X·Aᵢ` linearly: the rotation from a
//! Kronecker-vectorized homogeneous system, the translation from a
//! non-homogeneous least squares. [`refine`] then polishes the estimate with
//! Gauss-Newton on SE(3), updating through the exponential map.
//!
//! [`sim`] generates synthetic ground-truth scenes, [`eval`] reproduces the
//! statistical evaluation protocols, and [`io`] holds the on-disk formats
//! (PLY clouds, JSON dataset manifests and calibration reports, CSV tables).

pub mod closed_form;
pub mod detect;
pub mod error;
pub mod eval;
pub mod io;
pub mod plane;
pub mod refine;
pub mod se3;
pub mod sim;

pub use error::{Error, Result};
pub use plane::{Observation, Plane};
pub use se3::{RigidTransform, Twist};
