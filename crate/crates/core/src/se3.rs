//! Rigid-transform algebra on SE(3)/se(3): exponential and logarithm maps,
//! skew operators, nearest-rotation projection and the point-action
//! perturbation Jacobian used by the Gauss-Newton refiner.
//!
//! Twists are ordered (translational | rotational). Perturbations are applied
//! on the left: `X <- exp(xi) * X`.

use crate::error::{Error, Result};
use nalgebra::{Matrix3, Matrix4, SMatrix, Vector3, Vector4};

/// Angle below which exp/log switch to Taylor-series branches.
const SMALL_ANGLE: f64 = 1e-6;

/// A rigid transform `p_out = R * p_in + t`.
///
/// The rotation is kept orthogonal with positive determinant; checked
/// constructors enforce it to 1e-9.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RigidTransform {
    rotation: Matrix3<f64>,
    translation: Vector3<f64>,
}

impl RigidTransform {
    pub fn identity() -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation: Vector3::zeros(),
        }
    }

    /// Builds a transform, verifying the rotation invariants
    /// (`‖RᵀR − I‖_F ≤ 1e-9`, `det R = 1 ± 1e-9`).
    pub fn from_parts(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Result<Self> {
        let ortho = (rotation.transpose() * rotation - Matrix3::identity()).norm();
        if ortho > 1e-9 {
            return Err(Error::DegenerateInput(format!(
                "rotation is not orthogonal (‖RᵀR − I‖ = {ortho:.3e})"
            )));
        }
        let det = rotation.determinant();
        if (det - 1.0).abs() > 1e-9 {
            return Err(Error::DegenerateInput(format!(
                "rotation determinant is {det:.12}, expected +1"
            )));
        }
        Ok(Self {
            rotation,
            translation,
        })
    }

    /// Builds a transform without invariant checks. The caller guarantees the
    /// rotation is orthogonal with determinant +1.
    pub fn from_parts_unchecked(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Self {
        Self {
            rotation,
            translation,
        }
    }

    pub fn from_translation(translation: Vector3<f64>) -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation,
        }
    }

    pub fn rotation(&self) -> &Matrix3<f64> {
        &self.rotation
    }

    pub fn translation(&self) -> &Vector3<f64> {
        &self.translation
    }

    pub fn transform_point(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * p + self.translation
    }

    /// Composition: `(a.compose(b))(p) = a(b(p))`.
    pub fn compose(&self, other: &Self) -> Self {
        Self {
            rotation: self.rotation * other.rotation,
            translation: self.rotation * other.translation + self.translation,
        }
    }

    pub fn inverse(&self) -> Self {
        let rt = self.rotation.transpose();
        Self {
            rotation: rt,
            translation: -(rt * self.translation),
        }
    }

    pub fn to_homogeneous(&self) -> Matrix4<f64> {
        let mut m = Matrix4::identity();
        m.fixed_view_mut::<3, 3>(0, 0).copy_from(&self.rotation);
        m.fixed_view_mut::<3, 1>(0, 3).copy_from(&self.translation);
        m
    }

    /// Rotation angle in radians, in `[0, π]`.
    pub fn rotation_angle(&self) -> f64 {
        rotation_angle(&self.rotation)
    }
}

impl std::ops::Mul for &RigidTransform {
    type Output = RigidTransform;

    fn mul(self, rhs: &RigidTransform) -> RigidTransform {
        self.compose(rhs)
    }
}

/// Element of se(3): `rho` is the translational part (meters), `phi` the
/// rotational part (radians). Column ordering everywhere is (rho | phi).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Twist {
    pub rho: Vector3<f64>,
    pub phi: Vector3<f64>,
}

impl Twist {
    pub fn zero() -> Self {
        Self {
            rho: Vector3::zeros(),
            phi: Vector3::zeros(),
        }
    }

    pub fn new(rho: Vector3<f64>, phi: Vector3<f64>) -> Self {
        Self { rho, phi }
    }

    /// Reads the 6-vector layout (rho | phi).
    pub fn from_vector(v: &SMatrix<f64, 6, 1>) -> Self {
        Self {
            rho: Vector3::new(v[0], v[1], v[2]),
            phi: Vector3::new(v[3], v[4], v[5]),
        }
    }

    pub fn to_vector(&self) -> SMatrix<f64, 6, 1> {
        SMatrix::<f64, 6, 1>::from_column_slice(&[
            self.rho.x, self.rho.y, self.rho.z, self.phi.x, self.phi.y, self.phi.z,
        ])
    }

    pub fn norm(&self) -> f64 {
        (self.rho.norm_squared() + self.phi.norm_squared()).sqrt()
    }
}

/// Skew-symmetric matrix of `v`, so that `skew(v) * w == v × w`.
pub fn skew(v: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

// Rodrigues coefficients sin(t)/t, (1-cos(t))/t^2, (t-sin(t))/t^3 with
// Taylor branches below SMALL_ANGLE to avoid cancellation.
fn rodrigues_coefficients(theta: f64) -> (f64, f64, f64) {
    let theta2 = theta * theta;
    if theta < SMALL_ANGLE {
        (
            1.0 - theta2 / 6.0,
            0.5 - theta2 / 24.0,
            1.0 / 6.0 - theta2 / 120.0,
        )
    } else {
        let (sin, cos) = theta.sin_cos();
        (
            sin / theta,
            (1.0 - cos) / theta2,
            (theta - sin) / (theta2 * theta),
        )
    }
}

/// Exponential map se(3) -> SE(3).
pub fn exp_se3(xi: &Twist) -> RigidTransform {
    let theta = xi.phi.norm();
    let (a, b, c) = rodrigues_coefficients(theta);
    let w = skew(&xi.phi);
    let w2 = w * w;
    let rotation = Matrix3::identity() + a * w + b * w2;
    let v = Matrix3::identity() + b * w + c * w2;
    RigidTransform::from_parts_unchecked(rotation, v * xi.rho)
}

/// SO(3) logarithm. Returns (phi, near_branch_cut) where the flag marks a
/// rotation angle within 1e-9 of π, where the axis sign is ill-conditioned.
fn log_so3(rotation: &Matrix3<f64>) -> (Vector3<f64>, bool) {
    let cos_theta = ((rotation.trace() - 1.0) * 0.5).clamp(-1.0, 1.0);
    // Antisymmetric part holds sin(theta) * axis.
    let w = Vector3::new(
        rotation[(2, 1)] - rotation[(1, 2)],
        rotation[(0, 2)] - rotation[(2, 0)],
        rotation[(1, 0)] - rotation[(0, 1)],
    ) * 0.5;
    let sin_theta = w.norm();
    let theta = sin_theta.atan2(cos_theta);
    let near_branch_cut = (theta - std::f64::consts::PI).abs() <= 1e-9;

    if theta < SMALL_ANGLE {
        // theta/sin(theta) ≈ 1 + theta²/6
        return (w * (1.0 + theta * theta / 6.0), false);
    }
    if cos_theta > -0.999_999 {
        return (w * (theta / sin_theta), near_branch_cut);
    }

    // Near π the antisymmetric part degenerates; recover the axis from the
    // symmetric part: n nᵀ = ((R + Rᵀ)/2 − cosθ·I) / (1 − cosθ).
    let sym = (rotation + rotation.transpose()) * 0.5;
    let outer = (sym - Matrix3::identity() * cos_theta) / (1.0 - cos_theta);
    let k = (0..3)
        .max_by(|&i, &j| outer[(i, i)].partial_cmp(&outer[(j, j)]).unwrap())
        .unwrap();
    let mut axis = outer.column(k).into_owned() / outer[(k, k)].sqrt();
    axis.normalize_mut();
    // Pick the sign consistent with the (tiny) antisymmetric part, falling
    // back to a fixed convention exactly at π where both signs are valid.
    let sign = if sin_theta > 1e-12 {
        w.dot(&axis).signum()
    } else {
        let lead = axis.iter().find(|c| c.abs() > 1e-12).copied().unwrap_or(1.0);
        lead.signum()
    };
    (axis * (sign * theta), near_branch_cut)
}

/// Logarithm map SE(3) -> se(3), canonical branch `‖phi‖ ≤ π`.
pub fn log_se3(t: &RigidTransform) -> Twist {
    log_se3_checked(t).0
}

/// As [`log_se3`], also reporting whether the rotation angle is within 1e-9
/// of π (the branch cut, where the result is still valid but the rotation
/// axis sign is not a continuous function of the input).
pub fn log_se3_checked(t: &RigidTransform) -> (Twist, bool) {
    let (phi, near_branch_cut) = log_so3(t.rotation());
    let theta = phi.norm();
    let w = skew(&phi);
    let w2 = w * w;
    let v_inv = if theta < SMALL_ANGLE {
        let theta2 = theta * theta;
        Matrix3::identity() - 0.5 * w + (1.0 / 12.0 + theta2 / 720.0) * w2
    } else {
        let beta = (1.0 - theta * theta.sin() / (2.0 * (1.0 - theta.cos()))) / (theta * theta);
        Matrix3::identity() - 0.5 * w + beta * w2
    };
    (
        Twist {
            rho: v_inv * t.translation(),
            phi,
        },
        near_branch_cut,
    )
}

/// Rotation angle of `r` in radians, in `[0, π]`.
pub fn rotation_angle(r: &Matrix3<f64>) -> f64 {
    log_so3(r).0.norm()
}

/// Geodesic distance between two rotations, radians.
pub fn rotation_geodesic(a: &Matrix3<f64>, b: &Matrix3<f64>) -> f64 {
    rotation_angle(&(a.transpose() * b))
}

/// Derivative of `exp(xi) * T * p̃` (homogeneous) with respect to the left
/// perturbation `xi` at zero: `[[I, −skew(R·p + t)], [0, 0]]`, 4×6 with
/// columns ordered (rho | phi).
pub fn point_action_jacobian(t: &RigidTransform, p: &Vector3<f64>) -> SMatrix<f64, 4, 6> {
    let q = t.transform_point(p);
    let mut j = SMatrix::<f64, 4, 6>::zeros();
    j.fixed_view_mut::<3, 3>(0, 0).copy_from(&Matrix3::identity());
    j.fixed_view_mut::<3, 3>(0, 3).copy_from(&(-skew(&q)));
    j
}

/// Applies a transform to a homogeneous 4-vector.
pub fn apply_homogeneous(t: &RigidTransform, p: &Vector4<f64>) -> Vector4<f64> {
    let top = t.rotation() * p.fixed_rows::<3>(0) + t.translation() * p[3];
    Vector4::new(top.x, top.y, top.z, p[3])
}

/// Nearest rotation to `m` in Frobenius norm (scale-invariant for positive
/// scale): `U · diag(1, 1, det(UVᵀ)) · Vᵀ` from the SVD of `m`.
///
/// Fails if `m` has rank < 2, where the projection is not unique.
pub fn project_to_so3(m: &Matrix3<f64>) -> Result<Matrix3<f64>> {
    let svd = m.svd(true, true);
    let u = svd.u.expect("svd with u requested");
    let v_t = svd.v_t.expect("svd with v_t requested");
    let mut sv: Vec<f64> = svd.singular_values.iter().copied().collect();
    sv.sort_by(|a, b| b.partial_cmp(a).unwrap());
    if sv[1] <= 1e-12 * sv[0].max(1.0) {
        return Err(Error::DegenerateInput(format!(
            "matrix has rank < 2 (singular values {:.3e}, {:.3e}, {:.3e})",
            sv[0], sv[1], sv[2]
        )));
    }
    let det = (u * v_t).determinant();
    let r = u * Matrix3::from_diagonal(&Vector3::new(1.0, 1.0, det.signum())) * v_t;
    Ok(r)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    pub(crate) fn random_twist(rng: &mut impl Rng, max_angle: f64) -> Twist {
        let unit = |rng: &mut dyn rand::RngCore| {
            loop {
                let v = Vector3::new(
                    rng.random_range(-1.0..1.0),
                    rng.random_range(-1.0..1.0),
                    rng.random_range(-1.0..1.0),
                );
                if v.norm() > 1e-3 && v.norm() <= 1.0 {
                    return v.normalize();
                }
            }
        };
        Twist {
            rho: unit(rng) * rng.random_range(0.0..1.0),
            phi: unit(rng) * rng.random_range(0.0..max_angle),
        }
    }

    pub(crate) fn random_transform(rng: &mut impl Rng) -> RigidTransform {
        exp_se3(&random_twist(rng, 3.0))
    }

    #[test]
    fn skew_zero_vector() {
        assert_eq!(skew(&Vector3::zeros()), Matrix3::zeros());
    }

    #[test]
    fn skew_unit_x() {
        let expected = Matrix3::new(0.0, 0.0, 0.0, 0.0, 0.0, -1.0, 0.0, 1.0, 0.0);
        assert_eq!(skew(&Vector3::x()), expected);
    }

    #[test]
    fn skew_matches_cross_product() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..100 {
            let v = Vector3::new(rng.random(), rng.random(), rng.random());
            let w = Vector3::new(rng.random(), rng.random(), rng.random());
            assert_abs_diff_eq!(skew(&v) * w, v.cross(&w), epsilon = 1e-15);
            assert_eq!(skew(&v).transpose(), -skew(&v));
        }
    }

    #[test]
    fn exp_of_zero_is_identity() {
        let t = exp_se3(&Twist::zero());
        assert_eq!(t.rotation(), &Matrix3::identity());
        assert_eq!(t.translation(), &Vector3::zeros());
    }

    #[test]
    fn exp_pure_translation() {
        let t = exp_se3(&Twist::new(Vector3::new(0.1, -0.2, 0.3), Vector3::zeros()));
        assert_abs_diff_eq!(t.translation(), &Vector3::new(0.1, -0.2, 0.3), epsilon = 1e-15);
        assert_abs_diff_eq!(t.rotation(), &Matrix3::identity(), epsilon = 1e-15);
    }

    #[test]
    fn exp_quarter_turn_about_z() {
        let t = exp_se3(&Twist::new(
            Vector3::zeros(),
            Vector3::new(0.0, 0.0, std::f64::consts::FRAC_PI_2),
        ));
        let expected = Matrix3::new(0.0, -1.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0);
        assert_abs_diff_eq!(t.rotation(), &expected, epsilon = 1e-15);
        assert_abs_diff_eq!(t.translation(), &Vector3::zeros(), epsilon = 1e-15);
    }

    #[test]
    fn log_of_identity_is_zero() {
        let xi = log_se3(&RigidTransform::identity());
        assert_eq!(xi.rho, Vector3::zeros());
        assert_eq!(xi.phi, Vector3::zeros());
    }

    #[test]
    fn log_of_pure_translation() {
        let t = RigidTransform::from_translation(Vector3::new(0.4, 0.0, -2.0));
        let xi = log_se3(&t);
        assert_abs_diff_eq!(xi.rho, Vector3::new(0.4, 0.0, -2.0), epsilon = 1e-12);
        assert_abs_diff_eq!(xi.phi, Vector3::zeros(), epsilon = 1e-12);
    }

    #[test]
    fn exp_log_round_trip_random() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..100 {
            let t = random_transform(&mut rng);
            let back = exp_se3(&log_se3(&t));
            assert_abs_diff_eq!(back.rotation(), t.rotation(), epsilon = 1e-9);
            assert_abs_diff_eq!(back.translation(), t.translation(), epsilon = 1e-9);
        }
    }

    #[test]
    fn log_near_pi_flags_branch_cut() {
        let t = exp_se3(&Twist::new(
            Vector3::zeros(),
            Vector3::new(std::f64::consts::PI, 0.0, 0.0),
        ));
        let (xi, near) = log_se3_checked(&t);
        assert!(near);
        assert_abs_diff_eq!(xi.phi.norm(), std::f64::consts::PI, epsilon = 1e-9);
        let back = exp_se3(&xi);
        assert_abs_diff_eq!(back.rotation(), t.rotation(), epsilon = 1e-9);

        // Just below the cut the round trip must recover the exact twist.
        for axis in [Vector3::x(), Vector3::y(), Vector3::new(1.0, -2.0, 0.5).normalize()] {
            let phi = axis * (std::f64::consts::PI - 1e-5);
            let xi = Twist::new(Vector3::new(0.2, -0.1, 0.3), phi);
            let rt = log_se3(&exp_se3(&xi));
            assert_abs_diff_eq!(rt.phi, xi.phi, epsilon = 1e-8);
            assert_abs_diff_eq!(rt.rho, xi.rho, epsilon = 1e-8);
        }
    }

    #[test]
    fn point_jacobian_at_identity_origin() {
        let j = point_action_jacobian(&RigidTransform::identity(), &Vector3::zeros());
        assert_eq!(j.fixed_view::<3, 3>(0, 0).into_owned(), Matrix3::identity());
        assert_eq!(j.fixed_view::<3, 3>(0, 3).into_owned(), Matrix3::zeros());
        assert_eq!(j.row(3).into_owned(), SMatrix::<f64, 1, 6>::zeros());
    }

    #[test]
    fn point_jacobian_at_identity_unit_x() {
        let j = point_action_jacobian(&RigidTransform::identity(), &Vector3::x());
        assert_eq!(
            j.fixed_view::<3, 3>(0, 3).into_owned(),
            -skew(&Vector3::x())
        );
    }

    #[test]
    fn point_jacobian_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let eps = 1e-6;
        for _ in 0..100 {
            let t = random_transform(&mut rng);
            let p = Vector3::new(
                rng.random_range(-2.0..2.0),
                rng.random_range(-2.0..2.0),
                rng.random_range(-2.0..2.0),
            );
            let j = point_action_jacobian(&t, &p);
            let hp = Vector4::new(p.x, p.y, p.z, 1.0);
            for k in 0..6 {
                let mut e = SMatrix::<f64, 6, 1>::zeros();
                e[k] = eps;
                let plus = apply_homogeneous(&exp_se3(&Twist::from_vector(&e)).compose(&t), &hp);
                e[k] = -eps;
                let minus = apply_homogeneous(&exp_se3(&Twist::from_vector(&e)).compose(&t), &hp);
                let fd = (plus - minus) / (2.0 * eps);
                for r in 0..4 {
                    let a = j[(r, k)];
                    assert!(
                        (a - fd[r]).abs() <= 1e-5 * a.abs().max(1.0),
                        "column {k}, row {r}: analytic {a} vs fd {}",
                        fd[r]
                    );
                }
            }
        }
    }

    #[test]
    fn project_rotation_is_fixed_point() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let r = random_transform(&mut rng).rotation().into_owned();
        let p = project_to_so3(&r).unwrap();
        assert_abs_diff_eq!(p, r, epsilon = 1e-12);
    }

    #[test]
    fn project_is_scale_invariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let r = random_transform(&mut rng).rotation().into_owned();
        let p = project_to_so3(&(2.5 * r)).unwrap();
        assert_abs_diff_eq!(p, r, epsilon = 1e-12);
    }

    #[test]
    fn project_recovers_noisy_rotation() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..100 {
            let r = random_transform(&mut rng).rotation().into_owned();
            let mut noisy = r;
            for i in 0..3 {
                for j in 0..3 {
                    noisy[(i, j)] += rng.random_range(-1e-3..1e-3);
                }
            }
            let p = project_to_so3(&noisy).unwrap();
            assert!(rotation_geodesic(&p, &r) < 2e-3);
            assert!((p.transpose() * p - Matrix3::identity()).norm() <= 1e-9);
            assert!((p.determinant() - 1.0).abs() <= 1e-9);
        }
    }

    #[test]
    fn project_rejects_rank_deficient_input() {
        let m = Matrix3::from_columns(&[Vector3::x(), Vector3::zeros(), Vector3::zeros()]);
        assert!(matches!(
            project_to_so3(&m),
            Err(Error::DegenerateInput(_))
        ));
    }

    #[test]
    fn from_parts_rejects_non_rotation() {
        let m = Matrix3::identity() * 1.5;
        assert!(RigidTransform::from_parts(m, Vector3::zeros()).is_err());
        let mut reflect = Matrix3::identity();
        reflect[(2, 2)] = -1.0;
        assert!(RigidTransform::from_parts(reflect, Vector3::zeros()).is_err());
    }
}
