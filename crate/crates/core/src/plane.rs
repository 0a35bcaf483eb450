//! Planes as row vectors `M = (vᵀ, d)` with `‖v‖ = 1`: a point `p` lies on
//! the plane iff `v·p + d = 0`.
//!
//! Every `Plane` is kept in canonical orientation: `d ≥ 0`, and when `d` is
//! (numerically) zero the first nonzero normal component is positive. This
//! fixes the ±M ambiguity so that planes observed from the same side of the
//! surface compare equal.

use crate::error::{Error, Result};
use crate::se3::RigidTransform;
use nalgebra::{RowVector4, Vector3};
use serde::{Deserialize, Serialize};

/// An oriented plane in canonical form.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "PlaneRaw", into = "PlaneRaw")]
pub struct Plane {
    normal: Vector3<f64>,
    offset: f64,
}

/// Serde surface: arbitrary (normal, d) pairs, canonicalized on ingest.
#[derive(Serialize, Deserialize)]
struct PlaneRaw {
    normal: [f64; 3],
    d: f64,
}

impl TryFrom<PlaneRaw> for Plane {
    type Error = Error;

    fn try_from(raw: PlaneRaw) -> Result<Self> {
        Plane::new(Vector3::from(raw.normal), raw.d)
    }
}

impl From<Plane> for PlaneRaw {
    fn from(p: Plane) -> Self {
        PlaneRaw {
            normal: [p.normal.x, p.normal.y, p.normal.z],
            d: p.offset,
        }
    }
}

impl Plane {
    /// Builds the canonical plane through the given (not necessarily unit)
    /// normal and offset. Fails on a zero normal.
    pub fn new(normal: Vector3<f64>, offset: f64) -> Result<Self> {
        let len = normal.norm();
        if !(len > 0.0) || !normal.iter().all(|c| c.is_finite()) || !offset.is_finite() {
            return Err(Error::InvalidPlane);
        }
        let mut normal = normal / len;
        let mut offset = offset / len;
        let flip = if offset.abs() < 1e-12 {
            offset = 0.0;
            let lead = normal.iter().find(|c| c.abs() > 1e-12).copied().unwrap_or(1.0);
            lead < 0.0
        } else {
            offset < 0.0
        };
        if flip {
            normal = -normal;
            offset = -offset;
        }
        Ok(Self { normal, offset })
    }

    pub fn normal(&self) -> &Vector3<f64> {
        &self.normal
    }

    pub fn offset(&self) -> f64 {
        self.offset
    }

    /// The row vector `(vᵀ, d)`.
    pub fn row(&self) -> RowVector4<f64> {
        RowVector4::new(self.normal.x, self.normal.y, self.normal.z, self.offset)
    }

    /// Signed point-plane distance `v·p + d` (meters; zero iff `p` lies on
    /// the plane).
    pub fn eval(&self, p: &Vector3<f64>) -> f64 {
        self.normal.dot(p) + self.offset
    }

    /// Re-expresses the plane in frame G, where `t` maps frame-G points into
    /// this plane's frame: the row vector becomes `M·t`, re-canonicalized.
    pub fn compose(&self, t: &RigidTransform) -> Self {
        let normal = t.rotation().transpose() * self.normal;
        let offset = self.normal.dot(t.translation()) + self.offset;
        // ‖normal‖ is preserved by the rotation, so this cannot fail.
        Self::new(normal, offset).expect("rotated unit normal stays unit")
    }

    /// Angle between the normals of two planes, radians.
    pub fn normal_angle(&self, other: &Plane) -> f64 {
        self.normal.dot(&other.normal).clamp(-1.0, 1.0).acos()
    }
}

/// One calibration measurement: the plane detected in the camera frame
/// paired with the robot pose `A` (mapping base-frame points to TCP-frame
/// points) at which it was observed.
#[derive(Clone, Copy, Debug)]
pub struct Observation {
    pub plane: Plane,
    pub tcp_pose: RigidTransform,
}

impl Observation {
    pub fn new(plane: Plane, tcp_pose: RigidTransform) -> Self {
        Self { plane, tcp_pose }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::se3::{exp_se3, Twist};
    use approx::assert_abs_diff_eq;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn random_plane(rng: &mut impl Rng) -> Plane {
        let n = Vector3::new(
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
        );
        if n.norm() < 1e-3 {
            return random_plane(rng);
        }
        Plane::new(n, rng.random_range(-2.0..2.0)).unwrap()
    }

    fn random_transform(rng: &mut impl Rng) -> RigidTransform {
        let v = |rng: &mut dyn rand::RngCore, s: f64| {
            Vector3::new(
                rng.random_range(-s..s),
                rng.random_range(-s..s),
                rng.random_range(-s..s),
            )
        };
        exp_se3(&Twist::new(v(rng, 1.0), v(rng, 2.0)))
    }

    #[test]
    fn eval_point_on_plane() {
        let plane = Plane::new(Vector3::z(), 0.0).unwrap();
        assert_eq!(plane.eval(&Vector3::new(3.0, -2.0, 0.0)), 0.0);
    }

    #[test]
    fn eval_signed_height() {
        let plane = Plane::new(Vector3::z(), 0.0).unwrap();
        assert_eq!(plane.eval(&Vector3::new(0.0, 0.0, 0.5)), 0.5);
    }

    #[test]
    fn eval_matches_construction_distance() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..100 {
            let plane = random_plane(&mut rng);
            // Foot point plus s along the normal is at signed distance s.
            let foot = -plane.offset() * plane.normal();
            let s = rng.random_range(-1.0..1.0);
            let p = foot + s * plane.normal();
            assert_abs_diff_eq!(plane.eval(&p), s, epsilon = 1e-12);
        }
    }

    #[test]
    fn canonicalize_normalizes_and_flips() {
        let p = Plane::new(Vector3::new(0.0, 0.0, -2.0), -4.0).unwrap();
        assert_abs_diff_eq!(p.normal(), &Vector3::z(), epsilon = 1e-15);
        assert_abs_diff_eq!(p.offset(), 2.0, epsilon = 1e-15);
    }

    #[test]
    fn canonicalize_keeps_canonical_input() {
        let p = Plane::new(Vector3::z(), 0.3).unwrap();
        assert_eq!(p.normal(), &Vector3::z());
        assert_eq!(p.offset(), 0.3);
    }

    #[test]
    fn canonicalize_zero_offset_tie_break() {
        let p = Plane::new(Vector3::new(0.0, -1.0, 0.0), 0.0).unwrap();
        assert_eq!(p.normal(), &Vector3::y());
        assert_eq!(p.offset(), 0.0);
    }

    #[test]
    fn canonicalize_is_idempotent() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..50 {
            let p = random_plane(&mut rng);
            let again = Plane::new(*p.normal(), p.offset()).unwrap();
            assert_eq!(p, again);
        }
    }

    #[test]
    fn zero_normal_is_rejected() {
        assert!(matches!(
            Plane::new(Vector3::zeros(), 1.0),
            Err(Error::InvalidPlane)
        ));
    }

    #[test]
    fn compose_with_identity_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let plane = random_plane(&mut rng);
        let same = plane.compose(&RigidTransform::identity());
        assert_abs_diff_eq!(same.normal(), plane.normal(), epsilon = 1e-15);
        assert_abs_diff_eq!(same.offset(), plane.offset(), epsilon = 1e-15);
    }

    #[test]
    fn compose_with_translation() {
        // z_F = 0 seen from a frame shifted by (0,0,-1): the plane sits at
        // z_G = 1; the raw row is ((0,0,1), -1) and canonicalization flips it.
        let plane = Plane::new(Vector3::z(), 0.0).unwrap();
        let t = RigidTransform::from_translation(Vector3::new(0.0, 0.0, -1.0));
        let composed = plane.compose(&t);
        assert_abs_diff_eq!(composed.normal(), &-Vector3::z(), epsilon = 1e-15);
        assert_abs_diff_eq!(composed.offset(), 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(composed.eval(&Vector3::new(4.0, 2.0, 1.0)), 0.0, epsilon = 1e-15);
    }

    #[test]
    fn compose_pointwise_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(40);
        for _ in 0..20 {
            let plane = random_plane(&mut rng);
            let t = random_transform(&mut rng);
            let composed = plane.compose(&t);
            for _ in 0..100 {
                let p = Vector3::new(
                    rng.random_range(-2.0..2.0),
                    rng.random_range(-2.0..2.0),
                    rng.random_range(-2.0..2.0),
                );
                let lhs = composed.eval(&p).abs();
                let rhs = plane.eval(&t.transform_point(&p)).abs();
                assert_abs_diff_eq!(lhs, rhs, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn compose_is_associative_up_to_canonicalization() {
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        for _ in 0..50 {
            let plane = random_plane(&mut rng);
            let t1 = random_transform(&mut rng);
            let t2 = random_transform(&mut rng);
            let once = plane.compose(&t1.compose(&t2));
            let twice = plane.compose(&t1).compose(&t2);
            assert_abs_diff_eq!(once.normal(), twice.normal(), epsilon = 1e-12);
            assert_abs_diff_eq!(once.offset(), twice.offset(), epsilon = 1e-12);
        }
    }
}
