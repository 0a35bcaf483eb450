//! On-disk formats: PLY point clouds (ASCII and binary little-endian), JSON
//! dataset manifests and calibration reports, CSV evaluation tables.

mod manifest;
mod ply;
mod report;
mod tables;

pub use manifest::{
    ingest_dataset, load_ground_truth, load_manifest, save_ground_truth, save_manifest,
    DatasetManifest, GroundTruthFile, IngestedDataset, ManifestView, PoseConvention,
    MANIFEST_VERSION,
};
pub use ply::{read_ply, write_ply, PlyCloud, PlyFormat};
pub use report::{dataset_digest, load_report, save_report, CalibrationReportFile};
pub use tables::{
    write_json_summary, write_reconstruction_csv, write_runtime_csv, write_sweep_csv,
    write_table1_csv,
};

use crate::error::{Error, Result};
use crate::se3::{project_to_so3, RigidTransform};
use nalgebra::{Matrix3, Vector3};

/// Parses a row-major 4×4 pose. The rotation block must be orthogonal within
/// `tol` (robot logs carry rounded poses) and is then re-orthonormalized so
/// downstream code sees an exact rotation.
pub fn pose_from_rows(rows: &[[f64; 4]; 4], tol: f64) -> Result<RigidTransform> {
    let bottom = rows[3];
    if (bottom[0].abs() > tol) || (bottom[1].abs() > tol) || (bottom[2].abs() > tol)
        || ((bottom[3] - 1.0).abs() > tol)
    {
        return Err(Error::Parse(format!(
            "pose bottom row is {bottom:?}, expected (0, 0, 0, 1)"
        )));
    }
    let r = Matrix3::new(
        rows[0][0], rows[0][1], rows[0][2], rows[1][0], rows[1][1], rows[1][2], rows[2][0],
        rows[2][1], rows[2][2],
    );
    let ortho = (r.transpose() * r - Matrix3::identity()).norm();
    if ortho > tol {
        return Err(Error::Parse(format!(
            "pose rotation block is not orthogonal (‖RᵀR − I‖ = {ortho:.3e}, tolerance {tol:.0e})"
        )));
    }
    if r.determinant() < 0.0 {
        return Err(Error::Parse(
            "pose rotation block is a reflection (det < 0)".into(),
        ));
    }
    let rotation = project_to_so3(&r).map_err(|e| Error::Parse(format!("pose rotation: {e}")))?;
    let translation = Vector3::new(rows[0][3], rows[1][3], rows[2][3]);
    RigidTransform::from_parts(rotation, translation)
        .map_err(|e| Error::Parse(format!("pose: {e}")))
}

/// Serializes a transform as a row-major 4×4 array.
pub fn pose_to_rows(t: &RigidTransform) -> [[f64; 4]; 4] {
    let m = t.to_homogeneous();
    let mut rows = [[0.0; 4]; 4];
    for (i, row) in rows.iter_mut().enumerate() {
        for (j, v) in row.iter_mut().enumerate() {
            *v = m[(i, j)];
        }
    }
    rows
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pose_round_trips() {
        let t = crate::se3::exp_se3(&crate::se3::Twist::new(
            Vector3::new(0.1, -0.2, 0.3),
            Vector3::new(0.4, 0.5, -0.6),
        ));
        let rows = pose_to_rows(&t);
        let back = pose_from_rows(&rows, 1e-6).unwrap();
        assert!((back.rotation() - t.rotation()).norm() <= 1e-12);
        assert!((back.translation() - t.translation()).norm() <= 1e-12);
    }

    #[test]
    fn pose_rejects_bad_bottom_row() {
        let mut rows = pose_to_rows(&RigidTransform::identity());
        rows[3][0] = 0.5;
        assert!(pose_from_rows(&rows, 1e-6).is_err());
    }

    #[test]
    fn pose_reorthonormalizes_rounded_rotations() {
        let t = crate::se3::exp_se3(&crate::se3::Twist::new(
            Vector3::zeros(),
            Vector3::new(0.3, -0.7, 0.2),
        ));
        let mut rows = pose_to_rows(&t);
        // Round to 7 decimals, as a robot log might.
        for row in &mut rows {
            for v in row.iter_mut() {
                *v = (*v * 1e7).round() / 1e7;
            }
        }
        let back = pose_from_rows(&rows, 1e-6).unwrap();
        let r = back.rotation();
        assert!((r.transpose() * r - Matrix3::identity()).norm() <= 1e-12);
    }

    #[test]
    fn pose_rejects_far_from_orthogonal() {
        let mut rows = pose_to_rows(&RigidTransform::identity());
        rows[0][0] = 1.01;
        assert!(pose_from_rows(&rows, 1e-6).is_err());
    }
}
