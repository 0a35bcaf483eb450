//! Linear closed-form hand-eye solver.
//!
//! Consecutive-pair differences of the plane constraint `Y = Mᵢ·X·Aᵢ`
//! eliminate the unknown base-frame plane `Y`. The rotation rows are
//! vectorized with a Kronecker product,
//! `(R_{A,j}ᵀ ⊗ vⱼᵀ − R_{A,j+1}ᵀ ⊗ vⱼ₊₁ᵀ)·vec(R_X) = 0` under column-major
//! `vec`, and solved as a homogeneous least-squares problem: the right
//! singular vector of the smallest singular value, un-vectorized and
//! projected onto SO(3). The translation then solves the non-homogeneous
//! system with rows `(vⱼ − vⱼ₊₁)ᵀ`.
//!
//! TCP translations are centered beforehand (their mean subtracted) so the
//! linear systems stay well-scaled regardless of where the robot base sits;
//! the stored centering is composed back into the returned estimate.

use crate::error::{Error, Result};
use crate::plane::Observation;
use crate::refine;
use crate::se3::{project_to_so3, RigidTransform};
use nalgebra::{DMatrix, DVector, Matrix3, RowVector3, Vector3};
use serde::{Deserialize, Serialize};

/// Observations with mean-free TCP translations plus the transform that
/// undoes the shift.
#[derive(Clone, Debug)]
pub struct CenteredObservations {
    pub observations: Vec<Observation>,
    /// Pure translation `A_average`; original poses are recovered as
    /// `centering⁻¹ ∘ centered pose`, and a solution of the centered problem
    /// maps back as `X ∘ centering`.
    pub centering: RigidTransform,
}

/// Conditioning and fit quality of the linear solve.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolveDiagnostics {
    /// Ratio of the two smallest singular values of the rotation stack;
    /// near 1 means the nullspace is not unique (degenerate motion).
    pub rotation_gap: f64,
    /// Condition number of the translation coefficient matrix.
    pub translation_condition: f64,
    /// RMS of the consecutive-pair residual entries at the solution.
    pub residual_rms: f64,
}

/// Subtracts the mean TCP translation from every pose. Rotations are
/// untouched and the resulting translations have exactly zero mean.
pub fn center_translations(observations: &[Observation]) -> Result<CenteredObservations> {
    if observations.is_empty() {
        return Err(Error::InsufficientData(
            "cannot center an empty observation set".into(),
        ));
    }
    let mut t_avg = Vector3::zeros();
    for o in observations {
        t_avg += o.tcp_pose.translation();
    }
    t_avg /= observations.len() as f64;
    let centering = RigidTransform::from_translation(-t_avg);
    let observations = observations
        .iter()
        .map(|o| Observation::new(o.plane, centering.compose(&o.tcp_pose)))
        .collect();
    Ok(CenteredObservations {
        observations,
        centering,
    })
}

// One 3×9 block of the rotation stack: R_Aᵀ ⊗ vᵀ.
fn kron_block(obs: &Observation) -> nalgebra::SMatrix<f64, 3, 9> {
    let v = obs.plane.normal();
    obs.tcp_pose
        .rotation()
        .transpose()
        .kronecker(&RowVector3::new(v.x, v.y, v.z))
}

fn sorted_singular_values(svd: &nalgebra::SVD<f64, nalgebra::Dyn, nalgebra::Dyn>) -> Vec<f64> {
    let mut sv: Vec<f64> = svd.singular_values.iter().copied().collect();
    sv.sort_by(|a, b| b.partial_cmp(a).unwrap());
    sv
}

/// Rotation part of X from the Kronecker-vectorized homogeneous system.
/// Returns the rotation and the nullspace-separation diagnostic
/// (`rotation_gap`).
///
/// The nullspace vector is defined only up to ±scale; both signs are
/// projected onto SO(3) and the candidate with the smaller downstream
/// consecutive-difference residual wins.
pub fn solve_rotation(obs: &CenteredObservations) -> Result<(Matrix3<f64>, f64)> {
    let o = &obs.observations;
    let n = o.len();
    if n < 4 {
        return Err(Error::InsufficientData(format!(
            "rotation solve needs ≥ 4 observations (≥ 3 difference rows), got {n}"
        )));
    }

    let mut stack = DMatrix::zeros(3 * (n - 1), 9);
    for j in 0..n - 1 {
        let block = kron_block(&o[j]) - kron_block(&o[j + 1]);
        stack.view_mut((3 * j, 0), (3, 9)).copy_from(&block);
    }

    let svd = stack.clone().svd(false, true);
    let sv = sorted_singular_values(&svd);
    let (s_max, s_8, s_9) = (sv[0], sv[7], sv[8]);
    if s_max <= 1e-12 {
        return Err(Error::DegenerateMotion(
            "all difference rows vanish: consecutive observations are identical (static camera)"
                .into(),
        ));
    }
    let rotation_gap = if s_8 > 1e-12 * s_max { (s_9 / s_8).min(1.0) } else { 1.0 };
    if rotation_gap > 0.5 {
        let max_normal_spread = o
            .iter()
            .map(|a| a.plane.normal_angle(&o[0].plane))
            .fold(0.0, f64::max);
        let cause = if max_normal_spread < 1e-6 {
            "camera-frame plane normals are identical across views (pure-translation motion)"
        } else {
            "TCP rotations and plane normals lack the diversity to pin the rotation"
        };
        return Err(Error::DegenerateMotion(format!(
            "rotation nullspace is not well separated (gap {rotation_gap:.3}): {cause}"
        )));
    }

    // Right singular vector of the smallest singular value.
    let v_t = svd.v_t.as_ref().expect("svd with v_t requested");
    let min_idx = (0..svd.singular_values.len())
        .min_by(|&a, &b| {
            svd.singular_values[a]
                .partial_cmp(&svd.singular_values[b])
                .unwrap()
        })
        .unwrap();
    let w = v_t.row(min_idx);
    // Column-major un-vectorization.
    let m_raw = Matrix3::from_column_slice(&[
        w[0], w[1], w[2], w[3], w[4], w[5], w[6], w[7], w[8],
    ]);

    let project = |m: Matrix3<f64>| {
        project_to_so3(&m).map_err(|e| {
            Error::DegenerateMotion(format!("nullspace vector does not un-vectorize near a rotation: {e}"))
        })
    };
    let r_plus = project(m_raw)?;
    let r_minus = project(-m_raw)?;

    // Downstream Eq.-7 residual per candidate; if the translation system is
    // itself degenerate (sign-independent), fall back to the rotation-block
    // residual so the rotation can still be resolved.
    let score = |r: &Matrix3<f64>| -> f64 {
        match solve_translation(obs, r) {
            Ok((t, _)) => {
                let x = RigidTransform::from_parts_unchecked(*r, t);
                refine::objective(&x, o) / (n - 1) as f64
            }
            Err(_) => (&stack * rotation_vec(r)).norm_squared() / (n - 1) as f64,
        }
    };
    let rotation = if score(&r_plus) <= score(&r_minus) { r_plus } else { r_minus };
    Ok((rotation, rotation_gap))
}

fn rotation_vec(r: &Matrix3<f64>) -> DVector<f64> {
    DVector::from_column_slice(r.as_slice())
}

/// Translation part of X given the rotation, from the least-squares system
/// with rows `(vⱼ − vⱼ₊₁)ᵀ` and the plane-offset right-hand sides. Returns
/// the translation and the coefficient-matrix condition number.
pub fn solve_translation(
    obs: &CenteredObservations,
    r_x: &Matrix3<f64>,
) -> Result<(Vector3<f64>, f64)> {
    let o = &obs.observations;
    let n = o.len();
    if n < 4 {
        return Err(Error::InsufficientData(format!(
            "translation solve needs ≥ 4 observations, got {n}"
        )));
    }

    let mut a = DMatrix::zeros(n - 1, 3);
    let mut b = DVector::zeros(n - 1);
    for j in 0..n - 1 {
        let (oj, ok) = (&o[j], &o[j + 1]);
        let (vj, vk) = (oj.plane.normal(), ok.plane.normal());
        a.row_mut(j).copy_from(&(vj - vk).transpose());
        b[j] = -vj.dot(&(r_x * oj.tcp_pose.translation()))
            + vk.dot(&(r_x * ok.tcp_pose.translation()))
            - oj.plane.offset()
            + ok.plane.offset();
    }

    let svd = a.svd(true, true);
    let sv = sorted_singular_values(&svd);
    if sv[0] <= 1e-12 {
        return Err(Error::DegenerateNormals(
            "camera-frame normals are identical across views; translation is unobservable".into(),
        ));
    }
    let condition = sv[0] / sv[2].max(f64::MIN_POSITIVE);
    if condition > 1e8 {
        return Err(Error::DegenerateNormals(format!(
            "normal differences span fewer than 3 dimensions (condition {condition:.3e})"
        )));
    }
    let t = svd
        .solve(&b, 0.0)
        .map_err(|e| Error::DegenerateNormals(format!("translation solve failed: {e}")))?;
    Ok((Vector3::new(t[0], t[1], t[2]), condition))
}

/// Full closed-form pipeline: center, solve rotation and translation, check
/// orientation consistency, un-center. The returned `X` maps TCP-frame
/// points to camera-frame points for the original (uncentered) poses.
pub fn closed_form_calibrate(
    observations: &[Observation],
) -> Result<(RigidTransform, SolveDiagnostics)> {
    let n = observations.len();
    if n < 4 {
        return Err(Error::InsufficientData(format!(
            "calibration needs ≥ 4 observations, got {n}"
        )));
    }
    let centered = center_translations(observations)?;
    let (r_x, rotation_gap) = solve_rotation(&centered)?;

    // All views of one static plane taken from one side must map to
    // base-frame normals pointing the same way: nᵢᵀ = vᵢᵀ·R_X·R_{A,i}.
    let base_normals: Vec<Vector3<f64>> = centered
        .observations
        .iter()
        .map(|o| o.tcp_pose.rotation().transpose() * (r_x.transpose() * o.plane.normal()))
        .collect();
    if base_normals.iter().any(|ni| ni.dot(&base_normals[0]) < 0.0) {
        return Err(Error::OrientationInconsistency(
            "observations mix both sides of the plane: base-frame normals disagree in direction \
             under the candidate rotation"
                .into(),
        ));
    }

    let (t_x, translation_condition) = solve_translation(&centered, &r_x)?;
    let x_centered = RigidTransform::from_parts_unchecked(r_x, t_x);
    let residual_rms =
        (refine::objective(&x_centered, &centered.observations) / (4 * (n - 1)) as f64).sqrt();
    let x = x_centered.compose(&centered.centering);
    Ok((
        x,
        SolveDiagnostics {
            rotation_gap,
            translation_condition,
            residual_rms,
        },
    ))
}

/// Mean base-frame plane row `Mᵢ·X·Aᵢ` over all observations, for reporting.
pub fn mean_base_plane_row(x: &RigidTransform, observations: &[Observation]) -> [f64; 4] {
    let mut acc = [0.0; 4];
    for o in observations {
        let row = o.plane.row() * x.to_homogeneous() * o.tcp_pose.to_homogeneous();
        for k in 0..4 {
            acc[k] += row[k];
        }
    }
    for v in &mut acc {
        *v /= observations.len() as f64;
    }
    acc
}
