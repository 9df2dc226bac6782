//! Depth back-projection and ray-aligned primitive initialization.

use serde::{Deserialize, Serialize};

use super::frames::{ColorImage, DepthFrame};
use super::map::GaussianMap;
use super::primitive::GaussianPrimitive;
use crate::error::{Error, Result};
use crate::geometry::{CameraIntrinsics, Pose, RotationQuaternion, Vec3};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BackprojectedPoint {
    pub world: Vec3,
    pub u: u32,
    pub v: u32,
    pub depth: f64,
}

/// Lifts every `pixel_stride`-th valid pixel (both axes, starting at 0) to
/// world coordinates: `pose ∘ (z·K⁻¹·[u, v, 1])`.
pub fn backproject(depth: &DepthFrame, k: &CameraIntrinsics, pose: &Pose, pixel_stride: u32) -> Result<Vec<BackprojectedPoint>> {
    depth.check_matches(k)?;
    if pixel_stride == 0 {
        return Err(Error::invalid("pixel stride must be positive"));
    }
    let r = pose.rotation.to_matrix();
    let mut out = Vec::new();
    for v in (0..depth.height).step_by(pixel_stride as usize) {
        for u in (0..depth.width).step_by(pixel_stride as usize) {
            let z = depth.at(u, v);
            if z <= 0.0 {
                continue;
            }
            let cam = k.unproject(u as f64, v as f64) * z;
            out.push(BackprojectedPoint {
                world: r * cam + pose.translation,
                u,
                v,
                depth: z,
            });
        }
    }
    Ok(out)
}

/// Rotation whose local +Z axis is the world-frame viewing ray through
/// `pixel`: the camera orientation composed with the shortest arc taking
/// the optical axis onto the camera-frame ray.
pub fn ray_aligned_rotation(k: &CameraIntrinsics, pixel: (f64, f64), pose: &Pose) -> RotationQuaternion {
    let d = k.unproject(pixel.0, pixel.1).normalize();
    // shortest arc from +Z to d; d.z > 0 so the half-way vector is well defined
    let arc = RotationQuaternion::from_wxyz(1.0 + d.z, -d.y, d.x, 0.0).unwrap_or_default();
    pose.rotation.compose(&arc)
}

/// Initialization hyper-parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InitParams {
    /// Elongation ratio `s∥ / s⊥`.
    pub gamma: f64,
    /// Footprint multiplier: `s⊥ = κ·z / min(fx, fy)`.
    pub kappa: f64,
    pub opacity: f64,
}

impl Default for InitParams {
    fn default() -> Self {
        Self {
            gamma: 3.0,
            kappa: 1.0,
            opacity: 0.5,
        }
    }
}

impl InitParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.gamma > 0.0 && self.gamma.is_finite()) {
            return Err(Error::invalid("gamma must be positive"));
        }
        if !(self.kappa > 0.0 && self.kappa.is_finite()) {
            return Err(Error::invalid("kappa must be positive"));
        }
        if !(0.0..=1.0).contains(&self.opacity) {
            return Err(Error::invalid("initial opacity must lie in [0, 1]"));
        }
        Ok(())
    }
}

/// Anchors a primitive on the back-projected pixel with a thin ellipsoid
/// stretched along the viewing ray.
pub fn init_primitive(
    pixel: (u32, u32),
    depth: f64,
    color: [f64; 3],
    k: &CameraIntrinsics,
    pose: &Pose,
    params: &InitParams,
) -> Result<GaussianPrimitive> {
    if !(depth > 0.0) || !depth.is_finite() {
        return Err(Error::invalid(format!("depth {depth} must be positive")));
    }
    params.validate()?;
    let (u, v) = (pixel.0 as f64, pixel.1 as f64);
    let mean = pose.rotation.to_matrix() * (k.unproject(u, v) * depth) + pose.translation;
    let s_perp = params.kappa * depth / k.fx.min(k.fy);
    GaussianPrimitive::new(
        mean,
        Vec3::new(s_perp, s_perp, params.gamma * s_perp),
        ray_aligned_rotation(k, (u, v), pose),
        params.opacity,
        color,
    )
}

/// Default color of primitives initialized without an RGB frame.
pub const DEFAULT_COLOR: [f64; 3] = [0.5, 0.5, 0.5];

/// One posed RGB-D view used for initialization.
#[derive(Debug, Clone, Copy)]
pub struct InitView<'a> {
    pub depth: &'a DepthFrame,
    pub color: Option<&'a ColorImage>,
    pub intrinsics: &'a CameraIntrinsics,
    pub pose: &'a Pose,
}

/// Initializes one primitive per sampled valid pixel of every view, in
/// view order then row-major pixel order.
pub fn init_map(views: &[InitView<'_>], pixel_stride: u32, params: &InitParams) -> Result<GaussianMap> {
    params.validate()?;
    let mut map = GaussianMap::new(0);
    for view in views {
        if let Some(c) = view.color {
            if (c.width, c.height) != (view.depth.width, view.depth.height) {
                return Err(Error::invalid("color and depth rasters differ in size"));
            }
        }
        let batch = backproject(view.depth, view.intrinsics, view.pose, pixel_stride)?
            .iter()
            .map(|p| {
                let color = view.color.map_or(DEFAULT_COLOR, |c| c.at(p.u, p.v));
                init_primitive((p.u, p.v), p.depth, color, view.intrinsics, view.pose, params)
            })
            .collect::<Result<Vec<_>>>()?;
        map.insert_batch(batch)?;
    }
    Ok(map)
}
