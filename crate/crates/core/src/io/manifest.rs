//! Dataset manifests: a JSON file listing per-view TCP poses and either a
//! relative PLY path or an inline plane.

use crate::detect::{crop_depth, ransac_plane, RansacConfig};
use crate::error::{Error, Result};
use crate::io::{pose_from_rows, pose_to_rows, read_ply};
use crate::plane::{Observation, Plane};
use crate::se3::RigidTransform;
use crate::sim::split_seed;
use serde::{Deserialize, Serialize};
use std::fs;
use std::path::Path;

pub const MANIFEST_VERSION: u32 = 1;

/// How the `pose` matrices are to be interpreted.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PoseConvention {
    /// The pose maps base-frame points to TCP-frame points (`A` as used by
    /// the solver).
    BaseToTcp,
    /// The pose is the TCP pose expressed in the base frame, as most robot
    /// logs record it; ingest inverts it.
    TcpInBase,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManifestView {
    /// Row-major 4×4 homogeneous pose, meters.
    pub pose: [[f64; 4]; 4],
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cloud_path: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub plane: Option<Plane>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub version: u32,
    pub pose_convention: PoseConvention,
    pub views: Vec<ManifestView>,
}

impl DatasetManifest {
    fn validate(&self) -> Result<()> {
        if self.version != MANIFEST_VERSION {
            return Err(Error::Parse(format!(
                "unsupported manifest version {}, expected {MANIFEST_VERSION}",
                self.version
            )));
        }
        for (i, view) in self.views.iter().enumerate() {
            match (&view.cloud_path, &view.plane) {
                (Some(_), None) | (None, Some(_)) => {}
                _ => {
                    return Err(Error::Parse(format!(
                        "view {i}: exactly one of cloud_path or plane is required"
                    )));
                }
            }
        }
        Ok(())
    }
}

pub fn load_manifest(path: &Path) -> Result<DatasetManifest> {
    let text = fs::read_to_string(path)?;
    let manifest: DatasetManifest = serde_json::from_str(&text)
        .map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
    manifest.validate()?;
    Ok(manifest)
}

pub fn save_manifest(path: &Path, manifest: &DatasetManifest) -> Result<()> {
    manifest.validate()?;
    fs::write(path, serde_json::to_string_pretty(manifest).unwrap())?;
    Ok(())
}

/// Observations ready for the solver, plus ingest bookkeeping.
#[derive(Clone, Debug)]
pub struct IngestedDataset {
    pub observations: Vec<Observation>,
    /// Non-finite points dropped across all clouds.
    pub dropped_non_finite: usize,
    /// Views whose plane came from RANSAC detection (vs inline planes).
    pub detected_views: usize,
}

/// Loads a manifest and turns every view into an [`Observation`]: poses are
/// checked, re-orthonormalized and converted to the base→TCP convention;
/// clouds are depth-cropped and run through RANSAC (each view's detector is
/// seeded from `ransac.seed` by view index).
pub fn ingest_dataset(
    manifest_path: &Path,
    ransac: &RansacConfig,
    depth_crop: (f64, f64),
) -> Result<IngestedDataset> {
    let manifest = load_manifest(manifest_path)?;
    let dir = manifest_path.parent().unwrap_or_else(|| Path::new("."));

    let mut observations = Vec::with_capacity(manifest.views.len());
    let mut dropped = 0usize;
    let mut detected = 0usize;
    for (i, view) in manifest.views.iter().enumerate() {
        let pose = pose_from_rows(&view.pose, 1e-6)
            .map_err(|e| Error::Parse(format!("view {i}: {e}")))?;
        let tcp_pose = match manifest.pose_convention {
            PoseConvention::BaseToTcp => pose,
            PoseConvention::TcpInBase => pose.inverse(),
        };
        let plane = match (&view.plane, &view.cloud_path) {
            (Some(plane), None) => *plane,
            (None, Some(rel)) => {
                let ply = read_ply(&dir.join(rel))?;
                dropped += ply.dropped_non_finite;
                let cropped = crop_depth(&ply.cloud, depth_crop.0, depth_crop.1);
                let cfg = RansacConfig {
                    seed: split_seed(ransac.seed, i as u64),
                    ..*ransac
                };
                let (plane, _) = ransac_plane(&cropped, &cfg)
                    .map_err(|e| match e {
                        Error::DetectionFailure(msg) => {
                            Error::DetectionFailure(format!("view {i} ({rel}): {msg}"))
                        }
                        other => other,
                    })?;
                detected += 1;
                plane
            }
            _ => unreachable!("validated by load_manifest"),
        };
        observations.push(Observation::new(plane, tcp_pose));
    }
    Ok(IngestedDataset {
        observations,
        dropped_non_finite: dropped,
        detected_views: detected,
    })
}

/// Ground-truth sidecar written next to simulated datasets.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroundTruthFile {
    /// Row-major TCP→camera transform.
    pub x: [[f64; 4]; 4],
    pub plane_base: Plane,
}

impl GroundTruthFile {
    pub fn transform(&self) -> Result<RigidTransform> {
        pose_from_rows(&self.x, 1e-9)
    }

    pub fn new(x: &RigidTransform, plane_base: Plane) -> Self {
        Self {
            x: pose_to_rows(x),
            plane_base,
        }
    }
}

pub fn save_ground_truth(path: &Path, truth: &GroundTruthFile) -> Result<()> {
    fs::write(path, serde_json::to_string_pretty(truth).unwrap())?;
    Ok(())
}

pub fn load_ground_truth(path: &Path) -> Result<GroundTruthFile> {
    let text = fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))
}
