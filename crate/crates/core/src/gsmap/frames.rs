//! Per-frame rasters consumed by the pipeline. All rasters are row-major.

use crate::error::{Error, Result};
use crate::geometry::CameraIntrinsics;

/// Metric depth in meters; `0` marks an invalid pixel.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthFrame {
    pub width: u32,
    pub height: u32,
    pub depth: Vec<f64>,
}

impl DepthFrame {
    pub fn new(width: u32, height: u32, depth: Vec<f64>) -> Result<Self> {
        if depth.len() != width as usize * height as usize {
            return Err(Error::invalid(format!(
                "depth raster has {} values, expected {}x{}",
                depth.len(),
                width,
                height
            )));
        }
        if depth.iter().any(|d| !d.is_finite() || *d < 0.0) {
            return Err(Error::invalid("depth values must be finite and non-negative"));
        }
        Ok(Self { width, height, depth })
    }

    /// Converts raw sensor units, zeroing values beyond `max_range`.
    pub fn from_units(width: u32, height: u32, raw: &[u16], depth_factor: f64, max_range: f64) -> Result<Self> {
        let depth = raw
            .iter()
            .map(|&v| {
                let d = v as f64 * depth_factor;
                if d > max_range {
                    0.0
                } else {
                    d
                }
            })
            .collect();
        Self::new(width, height, depth)
    }

    #[inline]
    pub fn at(&self, u: u32, v: u32) -> f64 {
        self.depth[(v * self.width + u) as usize]
    }

    #[inline]
    pub fn is_valid(&self, u: u32, v: u32) -> bool {
        self.at(u, v) > 0.0
    }

    pub fn check_matches(&self, k: &CameraIntrinsics) -> Result<()> {
        if self.width != k.width || self.height != k.height {
            return Err(Error::invalid(format!(
                "depth frame is {}x{} but intrinsics are {}x{}",
                self.width, self.height, k.width, k.height
            )));
        }
        Ok(())
    }
}

/// Dense per-pixel embeddings.
#[derive(Debug, Clone, PartialEq)]
pub struct PixelEmbeddingFrame {
    pub width: u32,
    pub height: u32,
    pub dim: usize,
    pub data: Vec<f32>,
}

impl PixelEmbeddingFrame {
    pub fn new(width: u32, height: u32, dim: usize, data: Vec<f32>) -> Result<Self> {
        if data.len() != width as usize * height as usize * dim {
            return Err(Error::invalid("embedding raster size does not match width x height x dim"));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("embedding values must be finite"));
        }
        Ok(Self { width, height, dim, data })
    }

    #[inline]
    pub fn at(&self, u: u32, v: u32) -> &[f32] {
        let start = (v as usize * self.width as usize + u as usize) * self.dim;
        &self.data[start..start + self.dim]
    }
}

/// RGB image with channels in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ColorImage {
    pub width: u32,
    pub height: u32,
    pub data: Vec<[f64; 3]>,
}

impl ColorImage {
    pub fn new(width: u32, height: u32, data: Vec<[f64; 3]>) -> Result<Self> {
        if data.len() != width as usize * height as usize {
            return Err(Error::invalid("color raster size does not match width x height"));
        }
        Ok(Self { width, height, data })
    }

    pub fn filled(width: u32, height: u32, c: [f64; 3]) -> Self {
        Self {
            width,
            height,
            data: vec![c; width as usize * height as usize],
        }
    }

    #[inline]
    pub fn at(&self, u: u32, v: u32) -> [f64; 3] {
        self.data[(v * self.width + u) as usize]
    }
}

/// Per-pixel semantic class ids.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelImage {
    pub width: u32,
    pub height: u32,
    pub data: Vec<u8>,
}

impl LabelImage {
    pub fn new(width: u32, height: u32, data: Vec<u8>) -> Result<Self> {
        if data.len() != width as usize * height as usize {
            return Err(Error::invalid("label raster size does not match width x height"));
        }
        Ok(Self { width, height, data })
    }

    #[inline]
    pub fn at(&self, u: u32, v: u32) -> u8 {
        self.data[(v * self.width + u) as usize]
    }
}
