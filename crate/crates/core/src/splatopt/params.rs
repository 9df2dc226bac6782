use crate::geometry::{rotation_matrix_raw, Mat3, RotationQuaternion, Vec3};
use crate::gsmap::{GaussianPrimitive, COVARIANCE_EPSILON, SCALE_FLOOR, SUPPORT_MAHALANOBIS_SQ};

/// Free and anchored parameters of one primitive during optimization.
///
/// The rotation is an unnormalized quaternion `(w, x, y, z)`; it is
/// normalized inside every evaluation so gradients stay tangent-consistent.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplatParams {
    pub mean: Vec3,
    pub scale: Vec3,
    pub rotation: [f64; 4],
    pub opacity: f64,
    pub color: [f64; 3],
}

impl SplatParams {
    pub fn from_primitive(g: &GaussianPrimitive) -> Self {
        Self {
            mean: g.mean,
            scale: g.scale,
            rotation: g.rotation.to_array(),
            opacity: g.opacity,
            color: g.color,
        }
    }

    /// Writes the free parameters back into `g`, leaving the mean and
    /// feature untouched.
    pub fn store(&self, g: &mut GaussianPrimitive) {
        let [w, x, y, z] = self.rotation;
        g.scale = self.scale;
        g.rotation = RotationQuaternion::from_unit_wxyz(w, x, y, z)
            .or_else(|_| RotationQuaternion::from_wxyz(w, x, y, z))
            .unwrap_or(g.rotation);
        g.opacity = self.opacity;
        g.color = self.color;
    }

    pub fn quat_norm(&self) -> f64 {
        self.rotation.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn unit_rotation(&self) -> [f64; 4] {
        let n = self.quat_norm();
        self.rotation.map(|v| v / n)
    }

    pub fn rotation_matrix(&self) -> Mat3 {
        let [w, x, y, z] = self.unit_rotation();
        rotation_matrix_raw(w, x, y, z)
    }

    pub fn inverse_variances(&self) -> Vec3 {
        self.scale.map(|s| 1.0 / (s * s + COVARIANCE_EPSILON))
    }

    pub fn precision(&self) -> Mat3 {
        let r = self.rotation_matrix();
        r * Mat3::from_diagonal(&self.inverse_variances()) * r.transpose()
    }

    /// Radius of a sphere containing the 3σ ellipsoid.
    pub fn bounding_radius(&self) -> f64 {
        let smax = self.scale.iter().fold(0.0f64, |a, s| a.max(s.abs()));
        SUPPORT_MAHALANOBIS_SQ.sqrt() * (smax * smax + COVARIANCE_EPSILON).sqrt() * (1.0 + 1e-9)
    }

    /// Projects onto the feasible set: scale floor, opacity and color in
    /// `[0, 1]`, unit rotation.
    pub fn project(&mut self) {
        self.scale = self.scale.map(|s| s.max(SCALE_FLOOR));
        self.opacity = self.opacity.clamp(0.0, 1.0);
        self.color = self.color.map(|c| c.clamp(0.0, 1.0));
        let n = self.quat_norm();
        if n.is_finite() && n > 0.0 {
            self.rotation = self.rotation.map(|v| v / n);
        }
    }
}
