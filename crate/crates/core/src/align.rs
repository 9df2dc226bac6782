//! Closed-form least-squares alignment of corresponding point sets
//! (Umeyama). Solves `min Σ ‖dst_i − (s·R·src_i + t)‖²` over proper
//! rotations, optionally with the scale fixed to one.

use nalgebra::SVD;

use crate::error::{Error, Result};
use crate::geometry::{Mat3, RotationQuaternion, SimilarityTransform, Vec3};

const RANK_TOLERANCE: f64 = 1e-12;

pub fn umeyama_align(src: &[Vec3], dst: &[Vec3], estimate_scale: bool) -> Result<SimilarityTransform> {
    if src.len() != dst.len() {
        return Err(Error::invalid(format!(
            "point sets differ in size ({} vs {})",
            src.len(),
            dst.len()
        )));
    }
    let n = src.len();
    if n < 3 {
        return Err(Error::InsufficientCorrespondences { required: 3, got: n });
    }
    let inv_n = 1.0 / n as f64;
    let mu_src = src.iter().sum::<Vec3>() * inv_n;
    let mu_dst = dst.iter().sum::<Vec3>() * inv_n;

    let mut cov = Mat3::zeros();
    let mut var_src = 0.0;
    for (s, d) in src.iter().zip(dst) {
        let ds = s - mu_src;
        cov += (d - mu_dst) * ds.transpose();
        var_src += ds.norm_squared();
    }
    cov *= inv_n;
    var_src *= inv_n;

    let svd = SVD::new(cov, true, true);
    let (u, v_t) = match (svd.u, svd.v_t) {
        (Some(u), Some(v_t)) => (u, v_t),
        _ => return Err(Error::DegenerateConfiguration("SVD did not converge".into())),
    };
    let mut sv = [
        (svd.singular_values[0], 0usize),
        (svd.singular_values[1], 1),
        (svd.singular_values[2], 2),
    ];
    sv.sort_by(|a, b| b.0.total_cmp(&a.0));
    let largest = sv[0].0;
    if !(largest > 0.0) || sv[1].0 <= RANK_TOLERANCE * largest || !(var_src > 0.0) {
        return Err(Error::DegenerateConfiguration(
            "cross-covariance has rank < 2 (collinear or coincident points)".into(),
        ));
    }

    // Reflection guard: flip the axis of the smallest singular value.
    let mut signs = Vec3::repeat(1.0);
    if u.determinant() * v_t.determinant() < 0.0 {
        signs[sv[2].1] = -1.0;
    }
    let r = u * Mat3::from_diagonal(&signs) * v_t;

    let scale = if estimate_scale {
        let trace: f64 = (0..3).map(|i| svd.singular_values[i] * signs[i]).sum();
        trace / var_src
    } else {
        1.0
    };
    if !(scale > 0.0) {
        return Err(Error::DegenerateConfiguration(format!("estimated scale {scale} is not positive")));
    }
    let rotation = RotationQuaternion::from_matrix(&r);
    // Use the matrix actually represented by the stored quaternion.
    let translation = mu_dst - rotation.to_matrix() * mu_src * scale;
    SimilarityTransform::new(scale, rotation, translation)
}

/// Sum of squared residuals of `t` on the correspondences.
pub fn alignment_residual(t: &SimilarityTransform, src: &[Vec3], dst: &[Vec3]) -> f64 {
    src.iter()
        .zip(dst)
        .map(|(s, d)| (d - crate::geometry::apply_similarity(t, s)).norm_squared())
        .sum()
}
