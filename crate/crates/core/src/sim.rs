//! Synthetic ground-truth scenes: a static base-frame plane, TCP pose
//! sequences whose wrist camera views the plane inside the working depth
//! band, and rendered camera-frame point clouds with optional depth noise
//! and outliers.
//!
//! Everything is deterministic in the configured seed. Per-view generators
//! draw from sub-seeds derived with [`split_seed`], so the view count or any
//! parallel evaluation order cannot change what a given view contains.

use crate::detect::PointCloud;
use crate::error::{Error, Result};
use crate::plane::Plane;
use crate::se3::{exp_se3, RigidTransform, Twist};
use nalgebra::Vector3;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

/// Half-extent of the square plane patch points are sampled from, meters.
pub const PATCH_HALF_EXTENT: f64 = 0.25;
/// Sensor frustum half-angles (horizontal, vertical), radians; approximates
/// a 58°×45° field of view.
pub const FRUSTUM_HALF_ANGLES: (f64, f64) = (0.5061, 0.3927);

const SCENE_TAG: u64 = 0x5ce0e9a5;
const VIEW_TAG: u64 = 0x600dcafe;

const SPLITMIX_GAMMA: u64 = 0x9e37_79b9_7f4a_7c15;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(SPLITMIX_GAMMA);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derives an independent sub-seed for a tagged stream of `seed`.
pub fn split_seed(seed: u64, tag: u64) -> u64 {
    splitmix64(seed ^ splitmix64(tag))
}

/// Noise applied while rendering a scene (depth, outliers) or injected into
/// detected plane parameters (the rotation/translation sigmas).
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NoiseSpec {
    /// Gaussian noise along the camera ray, per point (meters).
    pub depth_sigma: f64,
    /// Plane-normal perturbation: rotation angle ~ |N(0, σ)| about a random
    /// in-plane axis (radians).
    pub plane_rotation_sigma: f64,
    /// Plane-offset perturbation ~ N(0, σ) (meters).
    pub plane_translation_sigma: f64,
    /// Fraction of each cloud replaced by uniform box outliers, in [0, 1).
    pub outlier_fraction: f64,
}

impl NoiseSpec {
    fn validate(&self) -> Result<()> {
        let ok = self.depth_sigma >= 0.0
            && self.plane_rotation_sigma >= 0.0
            && self.plane_translation_sigma >= 0.0
            && (0.0..1.0).contains(&self.outlier_fraction);
        if ok {
            Ok(())
        } else {
            Err(Error::SceneConstruction(
                "noise sigmas must be ≥ 0 and outlier_fraction in [0, 1)".into(),
            ))
        }
    }
}

/// Either an explicit transform (as a 4×4 row-major matrix in JSON) or the
/// string `"random"`.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(try_from = "TransformSpecRaw", into = "TransformSpecRaw")]
pub enum TransformSpec {
    Random,
    Fixed(RigidTransform),
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum TransformSpecRaw {
    Word(String),
    Matrix([[f64; 4]; 4]),
}

impl TryFrom<TransformSpecRaw> for TransformSpec {
    type Error = Error;

    fn try_from(raw: TransformSpecRaw) -> Result<Self> {
        match raw {
            TransformSpecRaw::Word(w) if w == "random" => Ok(TransformSpec::Random),
            TransformSpecRaw::Word(w) => Err(Error::Parse(format!(
                "expected \"random\" or a 4×4 matrix, got \"{w}\""
            ))),
            TransformSpecRaw::Matrix(m) => {
                Ok(TransformSpec::Fixed(crate::io::pose_from_rows(&m, 1e-6)?))
            }
        }
    }
}

impl From<TransformSpec> for TransformSpecRaw {
    fn from(spec: TransformSpec) -> Self {
        match spec {
            TransformSpec::Random => TransformSpecRaw::Word("random".into()),
            TransformSpec::Fixed(t) => TransformSpecRaw::Matrix(crate::io::pose_to_rows(&t)),
        }
    }
}

/// Either an explicit plane or the string `"random"`.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(try_from = "PlaneSpecRaw", into = "PlaneSpecRaw")]
pub enum PlaneSpec {
    Random,
    Fixed(Plane),
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum PlaneSpecRaw {
    Word(String),
    Plane(Plane),
}

impl TryFrom<PlaneSpecRaw> for PlaneSpec {
    type Error = Error;

    fn try_from(raw: PlaneSpecRaw) -> Result<Self> {
        match raw {
            PlaneSpecRaw::Word(w) if w == "random" => Ok(PlaneSpec::Random),
            PlaneSpecRaw::Word(w) => Err(Error::Parse(format!(
                "expected \"random\" or a plane {{normal, d}}, got \"{w}\""
            ))),
            PlaneSpecRaw::Plane(p) => Ok(PlaneSpec::Fixed(p)),
        }
    }
}

impl From<PlaneSpec> for PlaneSpecRaw {
    fn from(spec: PlaneSpec) -> Self {
        match spec {
            PlaneSpec::Random => PlaneSpecRaw::Word("random".into()),
            PlaneSpec::Fixed(p) => PlaneSpecRaw::Plane(p),
        }
    }
}

/// Scene generation parameters.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct SceneConfig {
    pub ground_truth_x: TransformSpec,
    pub plane_base: PlaneSpec,
    pub num_views: usize,
    /// Camera-to-aim-point distance band (near, far), meters.
    pub depth_range: (f64, f64),
    /// Maximum boresight tilt away from the plane normal, radians. Zero
    /// produces pure-translation pose sets (deliberately degenerate).
    pub rotation_diversity: f64,
    /// Points rendered per view; zero means plane-only views with empty
    /// clouds.
    pub points_per_view: usize,
    pub noise: NoiseSpec,
    pub seed: u64,
}

impl Default for SceneConfig {
    fn default() -> Self {
        Self {
            ground_truth_x: TransformSpec::Random,
            plane_base: PlaneSpec::Random,
            num_views: 30,
            depth_range: (0.3, 0.8),
            rotation_diversity: 30f64.to_radians(),
            points_per_view: 1000,
            noise: NoiseSpec::default(),
            seed: 0,
        }
    }
}

/// One rendered view: the TCP pose, the camera-frame cloud, and the exact
/// camera-frame plane.
#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticView {
    pub tcp_pose: RigidTransform,
    pub cloud: PointCloud,
    pub truth_plane_camera: Plane,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticDataset {
    pub truth_x: RigidTransform,
    pub truth_plane_base: Plane,
    pub views: Vec<SyntheticView>,
}

pub(crate) fn random_unit(rng: &mut impl Rng) -> Vector3<f64> {
    loop {
        let v = Vector3::new(
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
        );
        let n = v.norm();
        if n > 1e-3 && n <= 1.0 {
            return v / n;
        }
    }
}

/// Uniform random axis, angle uniform in `[0, max_angle)`.
pub fn random_rotation(rng: &mut impl Rng, max_angle: f64) -> RigidTransform {
    let phi = random_unit(rng) * rng.random_range(0.0..max_angle);
    exp_se3(&Twist::new(Vector3::zeros(), phi))
}

fn random_hand_eye(rng: &mut impl Rng) -> RigidTransform {
    let rot = random_rotation(rng, std::f64::consts::PI);
    let t = Vector3::new(
        rng.random_range(-0.15..0.15),
        rng.random_range(-0.15..0.15),
        rng.random_range(-0.15..0.15),
    );
    RigidTransform::from_parts_unchecked(rot.rotation().into_owned(), t)
}

fn random_base_plane(rng: &mut impl Rng) -> Plane {
    Plane::new(random_unit(rng), rng.random_range(0.2..1.0)).expect("unit normal")
}

// Orthonormal in-plane basis for a unit normal.
fn plane_basis(normal: &Vector3<f64>) -> (Vector3<f64>, Vector3<f64>) {
    let helper = if normal.x.abs() < 0.9 { Vector3::x() } else { Vector3::y() };
    let u1 = (helper - normal * helper.dot(normal)).normalize();
    let u2 = normal.cross(&u1);
    (u1, u2)
}

struct ViewGeometry {
    camera_in_base: RigidTransform,
    aim: Vector3<f64>,
}

// Camera pose aimed at a random patch point, boresight tilted up to
// `diversity` from the inward plane normal, range uniform in the depth band.
fn sample_view_geometry(rng: &mut impl Rng, plane: &Plane, cfg: &SceneConfig) -> ViewGeometry {
    let (u1, u2) = plane_basis(plane.normal());
    let anchor = -plane.offset() * plane.normal();
    let aim = anchor
        + u1 * rng.random_range(-PATCH_HALF_EXTENT..PATCH_HALF_EXTENT)
        + u2 * rng.random_range(-PATCH_HALF_EXTENT..PATCH_HALF_EXTENT);

    let (tilt, azimuth, roll) = if cfg.rotation_diversity > 0.0 {
        (
            rng.random_range(0.0..cfg.rotation_diversity),
            rng.random_range(0.0..std::f64::consts::TAU),
            rng.random_range(0.0..std::f64::consts::TAU),
        )
    } else {
        (0.0, 0.0, 0.0)
    };
    // Boresight points from the positive side toward the plane.
    let boresight =
        -plane.normal() * tilt.cos() + (u1 * azimuth.cos() + u2 * azimuth.sin()) * tilt.sin();
    let distance = rng.random_range(cfg.depth_range.0..cfg.depth_range.1);
    let center = aim - boresight * distance;

    let helper = if boresight.x.abs() < 0.9 { Vector3::x() } else { Vector3::y() };
    let x0 = (helper - boresight * helper.dot(&boresight)).normalize();
    let y0 = boresight.cross(&x0);
    let x_cam = x0 * roll.cos() + y0 * roll.sin();
    let y_cam = boresight.cross(&x_cam);
    let rotation = nalgebra::Matrix3::from_columns(&[x_cam, y_cam, boresight]);

    ViewGeometry {
        camera_in_base: RigidTransform::from_parts_unchecked(rotation, center),
        aim,
    }
}

fn inside_frustum(p: &Vector3<f64>) -> bool {
    p.z > 1e-6
        && p.x.abs() <= p.z * FRUSTUM_HALF_ANGLES.0.tan()
        && p.y.abs() <= p.z * FRUSTUM_HALF_ANGLES.1.tan()
}

fn validate_config(cfg: &SceneConfig) -> Result<()> {
    if !(cfg.depth_range.0 > 0.0 && cfg.depth_range.0 < cfg.depth_range.1) {
        return Err(Error::SceneConstruction(
            "depth_range must satisfy 0 < near < far".into(),
        ));
    }
    if cfg.num_views < 4 {
        return Err(Error::SceneConstruction("num_views must be ≥ 4".into()));
    }
    if !(0.0..std::f64::consts::FRAC_PI_2).contains(&cfg.rotation_diversity) {
        return Err(Error::SceneConstruction(
            "rotation_diversity must be in [0, π/2)".into(),
        ));
    }
    cfg.noise.validate()
}

/// Generates a full synthetic dataset. With zero noise every rendered point
/// satisfies its view's camera-frame plane equation exactly (within
/// floating-point roundoff).
pub fn generate_scene(cfg: &SceneConfig) -> Result<SyntheticDataset> {
    validate_config(cfg)?;
    let mut scene_rng = ChaCha8Rng::seed_from_u64(split_seed(cfg.seed, SCENE_TAG));
    let truth_x = match cfg.ground_truth_x {
        TransformSpec::Random => random_hand_eye(&mut scene_rng),
        TransformSpec::Fixed(t) => t,
    };
    let truth_plane_base = match cfg.plane_base {
        PlaneSpec::Random => random_base_plane(&mut scene_rng),
        PlaneSpec::Fixed(p) => p,
    };

    let depth_noise = Normal::new(0.0, cfg.noise.depth_sigma)
        .map_err(|e| Error::SceneConstruction(format!("bad depth sigma: {e}")))?;
    let (u1, u2) = plane_basis(truth_plane_base.normal());

    let mut views = Vec::with_capacity(cfg.num_views);
    for i in 0..cfg.num_views {
        let mut rng = ChaCha8Rng::seed_from_u64(split_seed(cfg.seed, VIEW_TAG ^ (i as u64)));
        let geom = sample_view_geometry(&mut rng, &truth_plane_base, cfg);
        let camera_to_base = geom.camera_in_base;
        let base_to_camera = camera_to_base.inverse();
        let tcp_pose = camera_to_base.compose(&truth_x).inverse();
        let truth_plane_camera = truth_plane_base.compose(&camera_to_base);

        let outliers = (cfg.noise.outlier_fraction * cfg.points_per_view as f64).round() as usize;
        let surface_points = cfg.points_per_view - outliers.min(cfg.points_per_view);

        let mut points = Vec::with_capacity(cfg.points_per_view);
        let mut attempts = 0usize;
        let budget = 20 * cfg.points_per_view + 100;
        while points.len() < surface_points {
            attempts += 1;
            if attempts > budget {
                return Err(Error::SceneConstruction(format!(
                    "view {i}: frustum clipping rejects almost the whole patch \
                     ({}/{surface_points} points after {attempts} draws)",
                    points.len()
                )));
            }
            let p_base = geom.aim
                + u1 * rng.random_range(-PATCH_HALF_EXTENT..PATCH_HALF_EXTENT)
                + u2 * rng.random_range(-PATCH_HALF_EXTENT..PATCH_HALF_EXTENT);
            let mut p_cam = base_to_camera.transform_point(&p_base);
            if !inside_frustum(&p_cam) {
                continue;
            }
            if cfg.noise.depth_sigma > 0.0 {
                let ray = p_cam / p_cam.norm();
                p_cam += ray * depth_noise.sample(&mut rng);
            }
            points.push(p_cam);
        }
        for _ in 0..outliers.min(cfg.points_per_view) {
            points.push(Vector3::new(
                rng.random_range(-0.4..0.4),
                rng.random_range(-0.4..0.4),
                rng.random_range(0.1..1.0),
            ));
        }

        views.push(SyntheticView {
            tcp_pose,
            cloud: PointCloud::new(points),
            truth_plane_camera,
        });
    }

    Ok(SyntheticDataset {
        truth_x,
        truth_plane_base,
        views,
    })
}

/// Injects plane-parameter noise: the normal is rotated by `|N(0, σ_rot)|`
/// about a random in-plane axis, the offset shifted by `N(0, σ_trans)`.
pub fn perturb_plane(plane: &Plane, spec: &NoiseSpec, seed: u64) -> Plane {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut normal = *plane.normal();
    if spec.plane_rotation_sigma > 0.0 {
        let gauss = Normal::new(0.0, spec.plane_rotation_sigma).expect("σ ≥ 0");
        let angle = gauss.sample(&mut rng).abs();
        let (u1, u2) = plane_basis(&normal);
        let az = rng.random_range(0.0..std::f64::consts::TAU);
        let axis = u1 * az.cos() + u2 * az.sin();
        let rot = exp_se3(&Twist::new(Vector3::zeros(), axis * angle));
        normal = rot.rotation() * normal;
    }
    let mut offset = plane.offset();
    if spec.plane_translation_sigma > 0.0 {
        let gauss = Normal::new(0.0, spec.plane_translation_sigma).expect("σ ≥ 0");
        offset += gauss.sample(&mut rng);
    }
    Plane::new(normal, offset).expect("perturbed normal stays unit")
}
