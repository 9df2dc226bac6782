use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Mat3, RotationQuaternion, Vec3};

/// Smallest admissible principal-axis standard deviation, in meters.
pub const SCALE_FLOOR: f64 = 1e-6;

/// Diagonal regularizer applied before inverting a covariance.
pub const COVARIANCE_EPSILON: f64 = 1e-12;

/// Mahalanobis radius (squared) of a primitive's support region: 3σ.
pub const SUPPORT_MAHALANOBIS_SQ: f64 = 9.0;

/// One language-embedded anisotropic Gaussian.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianPrimitive {
    pub mean: Vec3,
    /// Principal-axis standard deviations in meters.
    pub scale: Vec3,
    pub rotation: RotationQuaternion,
    pub opacity: f64,
    pub color: [f64; 3],
    /// Unit-norm language feature, absent until associated.
    pub feature: Option<Vec<f32>>,
}

impl GaussianPrimitive {
    pub fn new(mean: Vec3, scale: Vec3, rotation: RotationQuaternion, opacity: f64, color: [f64; 3]) -> Result<Self> {
        let g = Self {
            mean,
            scale: scale.map(|s| s.max(SCALE_FLOOR)),
            rotation,
            opacity,
            color,
            feature: None,
        };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.mean.iter().all(|v| v.is_finite()) {
            return Err(Error::invalid("primitive mean must be finite"));
        }
        if !self.scale.iter().all(|s| s.is_finite() && *s >= SCALE_FLOOR) {
            return Err(Error::invalid(format!("primitive scale {:?} below floor", self.scale)));
        }
        if !(0.0..=1.0).contains(&self.opacity) {
            return Err(Error::invalid(format!("opacity {} outside [0, 1]", self.opacity)));
        }
        if !self.color.iter().all(|c| c.is_finite()) {
            return Err(Error::invalid("primitive color must be finite"));
        }
        if let Some(f) = &self.feature {
            let n = feature_norm(f);
            if (n - 1.0).abs() > 1e-6 {
                return Err(Error::invalid(format!("feature norm {n} is not unit")));
            }
        }
        Ok(())
    }

    pub fn covariance(&self) -> Mat3 {
        covariance(self)
    }
}

pub fn feature_norm(f: &[f32]) -> f64 {
    f.iter().map(|&v| (v as f64) * (v as f64)).sum::<f64>().sqrt()
}

/// `Σ = R·diag(s²)·Rᵀ`.
pub fn covariance(g: &GaussianPrimitive) -> Mat3 {
    let r = g.rotation.to_matrix();
    r * Mat3::from_diagonal(&g.scale.component_mul(&g.scale)) * r.transpose()
}

/// Regularized inverse `(Σ + εI)⁻¹ = R·diag(1/(s² + ε))·Rᵀ`.
pub fn precision(g: &GaussianPrimitive) -> Mat3 {
    let r = g.rotation.to_matrix();
    let d = g.scale.map(|s| 1.0 / (s * s + COVARIANCE_EPSILON));
    r * Mat3::from_diagonal(&d) * r.transpose()
}

/// Quantities derived from a primitive's shape, cached per map entry.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PrimitiveShape {
    pub precision: Mat3,
    /// `ln det(Σ + εI)`.
    pub log_det: f64,
    /// Half-widths of the axis-aligned box bounding the 3σ ellipsoid.
    pub half_extent: Vec3,
}

impl PrimitiveShape {
    pub fn of(g: &GaussianPrimitive) -> Self {
        let r = g.rotation.to_matrix();
        let var = g.scale.map(|s| s * s + COVARIANCE_EPSILON);
        let cov = r * Mat3::from_diagonal(&var) * r.transpose();
        let k = SUPPORT_MAHALANOBIS_SQ.sqrt();
        // small inflation keeps the box conservative under rounding
        let half_extent = Vec3::new(cov[(0, 0)], cov[(1, 1)], cov[(2, 2)]).map(|v| k * v.max(0.0).sqrt() * (1.0 + 1e-9));
        Self {
            precision: precision(g),
            log_det: var.iter().map(|v| v.ln()).sum(),
            half_extent,
        }
    }
}

/// `(x−μ)ᵀ Λ (x−μ)` for a precision matrix `Λ`.
#[inline]
pub fn mahalanobis_sq(precision: &Mat3, mean: &Vec3, x: &Vec3) -> f64 {
    let d = x - mean;
    d.dot(&(precision * d))
}
