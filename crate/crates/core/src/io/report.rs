//! Calibration report files.

use crate::closed_form::SolveDiagnostics;
use crate::error::{Error, Result};
use crate::io::manifest::load_manifest;
use crate::refine::RefineReport;
use sha2::{Digest, Sha256};
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

/// Everything a calibration run produces, serialized as JSON.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CalibrationReportFile {
    /// Row-major TCP→camera transform, meters.
    pub x: [[f64; 4]; 4],
    /// Mean base-frame plane row `Mᵢ·X·Aᵢ`, reported for reference.
    pub y_mean: [f64; 4],
    pub diagnostics: SolveDiagnostics,
    /// Present unless refinement was disabled.
    pub refine: Option<RefineReport>,
    pub tool_version: String,
    /// SHA-256 over the manifest and every referenced cloud, hex-encoded.
    pub input_digest: String,
}

pub fn save_report(path: &Path, report: &CalibrationReportFile) -> Result<()> {
    fs::write(path, serde_json::to_string_pretty(report).unwrap())?;
    Ok(())
}

pub fn load_report(path: &Path) -> Result<CalibrationReportFile> {
    let text = fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))
}

/// SHA-256 digest over the manifest bytes followed by each view's cloud file
/// bytes (inline-plane views contribute their canonical row instead), in
/// view order.
pub fn dataset_digest(manifest_path: &Path) -> Result<String> {
    let manifest = load_manifest(manifest_path)?;
    let dir = manifest_path.parent().unwrap_or_else(|| Path::new("."));
    let mut hasher = Sha256::new();
    hasher.update(fs::read(manifest_path)?);
    for view in &manifest.views {
        if let Some(rel) = &view.cloud_path {
            hasher.update(fs::read(dir.join(rel))?);
        } else if let Some(plane) = &view.plane {
            for v in plane.row().iter() {
                hasher.update(v.to_le_bytes());
            }
        }
    }
    Ok(hex::encode(hasher.finalize()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn report_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("report.json");
        let report = CalibrationReportFile {
            x: [
                [1.0, 0.0, 0.0, 0.01],
                [0.0, 0.0, -1.0, 0.02],
                [0.0, 1.0, 0.0, 0.03],
                [0.0, 0.0, 0.0, 1.0],
            ],
            y_mean: [0.0, 0.0, 1.0, 0.45],
            diagnostics: SolveDiagnostics {
                rotation_gap: 1e-9,
                translation_condition: 3.4,
                residual_rms: 2e-4,
            },
            refine: Some(crate::refine::RefineReport {
                iterations: 7,
                initial_objective: 1e-3,
                final_objective: 4e-4,
                step_norms: vec![0.1, 0.01, 1e-6],
                converged: true,
            }),
            tool_version: "0.1.0".into(),
            input_digest: "abc123".into(),
        };
        save_report(&path, &report).unwrap();
        assert_eq!(load_report(&path).unwrap(), report);
    }
}
