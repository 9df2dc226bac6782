//! Labeled RGB-D frame sets and their JSON manifest.
//!
//! A manifest lists per-frame raster paths relative to the manifest file,
//! the shared intrinsics, and a TUM trajectory whose i-th pose belongs to
//! the i-th frame.

use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{CameraIntrinsics, Pose};
use crate::gsmap::{ColorImage, DepthFrame, InitView, LabelImage, PixelEmbeddingFrame};
use crate::io;
use crate::trajectory::Trajectory;

/// Meters per raw depth unit unless a manifest says otherwise.
pub const DEFAULT_DEPTH_FACTOR: f64 = 1e-3;
/// Depth readings beyond this range are discarded, in meters.
pub const DEFAULT_MAX_RANGE: f64 = 10.0;

#[derive(Debug, Clone)]
pub struct LabeledFrame {
    pub depth: DepthFrame,
    pub labels: LabelImage,
    pub intrinsics: CameraIntrinsics,
    pub pose: Pose,
    pub color: Option<ColorImage>,
    pub embedding: Option<PixelEmbeddingFrame>,
}

impl LabeledFrame {
    pub fn validate(&self) -> Result<()> {
        self.intrinsics.validate()?;
        self.depth.check_matches(&self.intrinsics)?;
        let dims = (self.depth.width, self.depth.height);
        if (self.labels.width, self.labels.height) != dims {
            return Err(Error::invalid("label raster size differs from depth"));
        }
        if self.color.as_ref().is_some_and(|c| (c.width, c.height) != dims) {
            return Err(Error::invalid("color raster size differs from depth"));
        }
        if self.embedding.as_ref().is_some_and(|e| (e.width, e.height) != dims) {
            return Err(Error::invalid("embedding raster size differs from depth"));
        }
        Ok(())
    }

    pub fn init_view(&self) -> InitView<'_> {
        InitView {
            depth: &self.depth,
            color: self.color.as_ref(),
            intrinsics: &self.intrinsics,
            pose: &self.pose,
        }
    }
}

#[derive(Debug, Clone)]
pub struct LabeledFrameSet {
    pub frames: Vec<LabeledFrame>,
    pub depth_factor: f64,
    pub max_range: f64,
}

impl LabeledFrameSet {
    pub fn new(frames: Vec<LabeledFrame>, depth_factor: f64, max_range: f64) -> Result<Self> {
        let s = Self {
            frames,
            depth_factor,
            max_range,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.max_range > 0.0) {
            return Err(Error::invalid(format!("max_range {} must be positive", self.max_range)));
        }
        if !(self.depth_factor > 0.0 && self.depth_factor.is_finite()) {
            return Err(Error::invalid(format!("depth_factor {} must be positive", self.depth_factor)));
        }
        self.frames.iter().try_for_each(LabeledFrame::validate)
    }

    pub fn trajectory(&self) -> Trajectory {
        Trajectory::from_poses(self.frames.iter().map(|f| f.pose))
    }

    pub fn init_views(&self) -> Vec<InitView<'_>> {
        self.frames.iter().map(LabeledFrame::init_view).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FrameEntry {
    pub depth: String,
    pub label: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub color: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub embedding: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetManifest {
    pub intrinsics: CameraIntrinsics,
    pub trajectory: String,
    #[serde(default = "default_depth_factor")]
    pub depth_factor: f64,
    #[serde(default = "default_max_range")]
    pub max_range: f64,
    pub frames: Vec<FrameEntry>,
}

fn default_depth_factor() -> f64 {
    DEFAULT_DEPTH_FACTOR
}

fn default_max_range() -> f64 {
    DEFAULT_MAX_RANGE
}

fn base_dir(manifest: &Path) -> PathBuf {
    manifest.parent().map(Path::to_path_buf).unwrap_or_default()
}

impl DatasetManifest {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let m: Self = serde_json::from_str(&text).map_err(|e| schema_error(&e))?;
        m.intrinsics.validate().map_err(|e| Error::schema("intrinsics", e.to_string()))?;
        if !(m.depth_factor > 0.0) {
            return Err(Error::schema("depth_factor", "must be positive"));
        }
        if !(m.max_range > 0.0) {
            return Err(Error::schema("max_range", "must be positive"));
        }
        if m.frames.is_empty() {
            return Err(Error::schema("frames", "manifest lists no frames"));
        }
        Ok(m)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self).map_err(|e| Error::format(path, e.to_string()))?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn has_embeddings(&self) -> bool {
        self.frames.iter().all(|f| f.embedding.is_some())
    }

    /// Reads every raster; `with_embeddings` also loads embedding rasters.
    pub fn load_frames(&self, manifest_path: &Path, with_embeddings: bool) -> Result<LabeledFrameSet> {
        let base = base_dir(manifest_path);
        let traj_path = base.join(&self.trajectory);
        let traj = Trajectory::load(&traj_path)?;
        if traj.poses.len() != self.frames.len() {
            return Err(Error::schema(
                "trajectory",
                format!("{} poses for {} frames", traj.poses.len(), self.frames.len()),
            ));
        }
        let frames = self
            .frames
            .par_iter()
            .zip(&traj.poses)
            .map(|(entry, stamped)| {
                let depth = io::read_depth_png(&base.join(&entry.depth), self.depth_factor, self.max_range)?;
                let labels = io::read_label_png(&base.join(&entry.label))?;
                let color = entry.color.as_ref().map(|c| io::read_color_png(&base.join(c))).transpose()?;
                let embedding = match (&entry.embedding, with_embeddings) {
                    (Some(e), true) => Some(io::read_embedding_raster(&base.join(e))?),
                    _ => None,
                };
                let f = LabeledFrame {
                    depth,
                    labels,
                    intrinsics: self.intrinsics,
                    pose: stamped.pose,
                    color,
                    embedding,
                };
                f.validate()?;
                Ok(f)
            })
            .collect::<Result<Vec<_>>>()?;
        LabeledFrameSet::new(frames, self.depth_factor, self.max_range)
    }
}

fn schema_error(e: &serde_json::Error) -> Error {
    let msg = e.to_string();
    let field = msg
        .split('`')
        .nth(1)
        .map(str::to_string)
        .unwrap_or_else(|| "manifest".to_string());
    Error::schema(field, msg)
}
