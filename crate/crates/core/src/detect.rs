//! Dominant-plane extraction from depth-camera point clouds: depth-range
//! cropping, seeded RANSAC over 3-point samples, and total-least-squares
//! refinement over the winning inlier set.

use crate::error::{Error, Result};
use crate::plane::Plane;
use nalgebra::{Matrix3, Vector3};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Unordered set of 3D points in meters, camera frame.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct PointCloud {
    pub points: Vec<Vector3<f64>>,
}

impl PointCloud {
    pub fn new(points: Vec<Vector3<f64>>) -> Self {
        Self { points }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// RANSAC parameters. Defaults: 5 mm inlier distance (half the nominal
/// depth accuracy of a consumer sensor at desk range), 200 iterations,
/// 60% minimum inlier ratio.
#[derive(Clone, Copy, Debug)]
pub struct RansacConfig {
    pub distance_threshold: f64,
    pub max_iterations: usize,
    pub min_inlier_ratio: f64,
    pub seed: u64,
}

impl Default for RansacConfig {
    fn default() -> Self {
        Self {
            distance_threshold: 5e-3,
            max_iterations: 200,
            min_inlier_ratio: 0.6,
            seed: 0,
        }
    }
}

impl RansacConfig {
    fn validate(&self) -> Result<()> {
        if !(self.distance_threshold > 0.0) {
            return Err(Error::DetectionFailure(
                "distance_threshold must be positive".into(),
            ));
        }
        if self.max_iterations == 0 {
            return Err(Error::DetectionFailure("max_iterations must be ≥ 1".into()));
        }
        if !(self.min_inlier_ratio > 0.0 && self.min_inlier_ratio <= 1.0) {
            return Err(Error::DetectionFailure(
                "min_inlier_ratio must be in (0, 1]".into(),
            ));
        }
        Ok(())
    }
}

/// Keeps exactly the points with `near ≤ z ≤ far` (camera optical axis = z).
pub fn crop_depth(cloud: &PointCloud, near: f64, far: f64) -> PointCloud {
    assert!(0.0 < near && near < far, "require 0 < near < far");
    PointCloud::new(
        cloud
            .points
            .iter()
            .filter(|p| p.z >= near && p.z <= far)
            .copied()
            .collect(),
    )
}

/// Plane through three points. Fails when the sample is collinear or
/// coincident (cross product below 1e-12 of the edge-length scale).
pub fn plane_from_three(p1: &Vector3<f64>, p2: &Vector3<f64>, p3: &Vector3<f64>) -> Result<Plane> {
    let e1 = p2 - p1;
    let e2 = p3 - p1;
    let normal = e1.cross(&e2);
    let scale = e1.norm() * e2.norm();
    if normal.norm() <= 1e-12 * scale.max(f64::MIN_POSITIVE) {
        return Err(Error::DegenerateSample(
            "three sampled points are collinear or coincident".into(),
        ));
    }
    let unit = normal / normal.norm();
    Plane::new(unit, -unit.dot(p1))
}

/// Total-least-squares plane over the indexed subset: the normal is the
/// smallest-eigenvalue direction of the centered scatter matrix, which
/// minimizes the sum of squared point-plane distances.
pub fn refine_plane(cloud: &PointCloud, inliers: &[usize]) -> Result<Plane> {
    if inliers.len() < 3 {
        return Err(Error::DegenerateSample(format!(
            "plane refinement needs ≥ 3 inliers, got {}",
            inliers.len()
        )));
    }
    let mut centroid = Vector3::zeros();
    for &i in inliers {
        centroid += cloud.points[i];
    }
    centroid /= inliers.len() as f64;

    let mut scatter = Matrix3::zeros();
    for &i in inliers {
        let d = cloud.points[i] - centroid;
        scatter += d * d.transpose();
    }
    let eigen = scatter.symmetric_eigen();
    let mut order: Vec<usize> = (0..3).collect();
    order.sort_by(|&a, &b| {
        eigen.eigenvalues[a]
            .partial_cmp(&eigen.eigenvalues[b])
            .unwrap()
    });
    let (lo, mid, hi) = (order[0], order[1], order[2]);
    if eigen.eigenvalues[mid] <= 1e-12 * eigen.eigenvalues[hi].max(f64::MIN_POSITIVE) {
        return Err(Error::DegenerateSample(
            "inlier scatter is rank-deficient (collinear points)".into(),
        ));
    }
    let normal = eigen.eigenvectors.column(lo).into_owned();
    Plane::new(normal, -normal.dot(&centroid))
}

/// RANSAC plane detection. Scores every iteration's 3-point candidate by
/// inlier count (ties by inlier RMS distance), refines the best candidate's
/// inlier set by total least squares, and re-filters inliers against the
/// refined plane. Deterministic in `cfg.seed`.
pub fn ransac_plane(cloud: &PointCloud, cfg: &RansacConfig) -> Result<(Plane, Vec<usize>)> {
    cfg.validate()?;
    let n = cloud.len();
    if n < 3 {
        return Err(Error::InsufficientData(format!(
            "plane detection needs ≥ 3 points, got {n}"
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut best: Option<(usize, f64, Plane)> = None;

    for _ in 0..cfg.max_iterations {
        // Degenerate 3-point samples are resampled without consuming the
        // iteration slot, at most 10 times.
        let mut candidate = None;
        for _ in 0..10 {
            let idx = rand::seq::index::sample(&mut rng, n, 3);
            if let Ok(plane) = plane_from_three(
                &cloud.points[idx.index(0)],
                &cloud.points[idx.index(1)],
                &cloud.points[idx.index(2)],
            ) {
                candidate = Some(plane);
                break;
            }
        }
        let Some(plane) = candidate else { continue };

        let mut count = 0usize;
        let mut sq_sum = 0.0;
        for p in &cloud.points {
            let d = plane.eval(p);
            if d.abs() <= cfg.distance_threshold {
                count += 1;
                sq_sum += d * d;
            }
        }
        if count == 0 {
            continue;
        }
        let rms = (sq_sum / count as f64).sqrt();
        let better = match &best {
            None => true,
            Some((bc, br, _)) => count > *bc || (count == *bc && rms < *br),
        };
        if better {
            best = Some((count, rms, plane));
        }
    }

    let required = cfg.min_inlier_ratio * n as f64;
    let Some((count, _, candidate)) = best else {
        return Err(Error::DetectionFailure(format!(
            "no plane candidate found in {} iterations",
            cfg.max_iterations
        )));
    };
    if (count as f64) < required {
        return Err(Error::DetectionFailure(format!(
            "best candidate has {count}/{n} inliers, below the required ratio {:.2}",
            cfg.min_inlier_ratio
        )));
    }

    let inliers: Vec<usize> = (0..n)
        .filter(|&i| candidate.eval(&cloud.points[i]).abs() <= cfg.distance_threshold)
        .collect();
    let refined = refine_plane(cloud, &inliers)?;
    // Re-filter so every returned index satisfies the inlier predicate
    // against the plane actually returned.
    let final_inliers: Vec<usize> = (0..n)
        .filter(|&i| refined.eval(&cloud.points[i]).abs() <= cfg.distance_threshold)
        .collect();
    if (final_inliers.len() as f64) < required {
        return Err(Error::DetectionFailure(format!(
            "refined plane keeps {}/{n} inliers, below the required ratio {:.2}",
            final_inliers.len(),
            cfg.min_inlier_ratio
        )));
    }
    Ok((refined, final_inliers))
}
