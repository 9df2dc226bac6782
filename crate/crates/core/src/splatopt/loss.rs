use super::render::RenderedFrame;
use crate::error::{Error, Result};
use crate::geometry::{CameraIntrinsics, Pose};
use crate::gsmap::{ColorImage, DepthFrame};

/// One posed RGB-D observation.
#[derive(Debug, Clone)]
pub struct TrainingFrame {
    pub image: ColorImage,
    pub depth: DepthFrame,
    pub intrinsics: CameraIntrinsics,
    pub pose: Pose,
}

impl TrainingFrame {
    pub fn new(image: ColorImage, depth: DepthFrame, intrinsics: CameraIntrinsics, pose: Pose) -> Result<Self> {
        let f = Self {
            image,
            depth,
            intrinsics,
            pose,
        };
        f.validate()?;
        Ok(f)
    }

    pub fn validate(&self) -> Result<()> {
        self.intrinsics.validate()?;
        self.depth.check_matches(&self.intrinsics)?;
        if (self.image.width, self.image.height) != (self.intrinsics.width, self.intrinsics.height) {
            return Err(Error::invalid(format!(
                "image is {}x{}, camera is {}x{}",
                self.image.width, self.image.height, self.intrinsics.width, self.intrinsics.height
            )));
        }
        Ok(())
    }
}

/// Squared color residual plus `beta` times the squared depth residual,
/// the latter only where `depth` holds a valid measurement.
#[inline]
pub(crate) fn pixel_loss(rendered: [f64; 3], depth_hat: f64, observed: [f64; 3], depth: f64, beta: f64) -> f64 {
    let mut l = 0.0;
    for c in 0..3 {
        let r = rendered[c] - observed[c];
        l += r * r;
    }
    if depth > 0.0 && depth.is_finite() {
        let r = depth_hat - depth;
        l += beta * r * r;
    }
    l
}

pub fn rendering_loss(rendered: &RenderedFrame, color: &ColorImage, depth: &DepthFrame, beta: f64) -> Result<f64> {
    let dims = (rendered.width, rendered.height);
    if dims != (color.width, color.height) || dims != (depth.width, depth.height) {
        return Err(Error::invalid(format!(
            "raster sizes differ: rendered {:?}, color {}x{}, depth {}x{}",
            dims, color.width, color.height, depth.width, depth.height
        )));
    }
    if !(beta >= 0.0) {
        return Err(Error::invalid(format!("beta {beta} must be non-negative")));
    }
    Ok((0..rendered.color.len())
        .map(|i| pixel_loss(rendered.color[i], rendered.depth[i], color.data[i], depth.depth[i], beta))
        .sum())
}
