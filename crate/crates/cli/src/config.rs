//! Pipeline configuration: defaults, optional JSON file, flag overrides.

use std::path::Path;

use freeocc::bench::{DEFAULT_FRAME_STRIDE, DEFAULT_PIXEL_STRIDE, DEFAULT_TOLERANCE_VOXELS};
use freeocc::gsmap::{AssociationParams, InitParams};
use freeocc::occproj::{DEFAULT_TAU_OCC, DEFAULT_VOXEL_SIZE};
use freeocc::splatopt::OptimizerConfig;
use freeocc::{Error, Result};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub gamma: f64,
    pub kappa: f64,
    pub o_init: f64,
    pub beta: f64,
    pub tau_occ: f64,
    pub voxel_size: f64,
    pub pixel_stride: u32,
    pub frame_stride: usize,
    /// Overrides the manifest's range cutoff when set.
    pub max_range: Option<f64>,
    pub association_radius: f64,
    /// Expected embedding dimension; checked on association, forced on synthesis.
    pub feature_dim: Option<usize>,
    /// Scene seed for synthesis; the scene file's own seed when unset.
    pub seed: Option<u64>,
    pub max_iters: usize,
    pub lr_scale: f64,
    pub lr_rotation: f64,
    pub lr_opacity: f64,
    pub lr_color: f64,
    pub tol: f64,
    pub tolerance_voxels: f64,
    pub dilate: bool,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        let opt = OptimizerConfig::default();
        let init = InitParams::default();
        Self {
            gamma: init.gamma,
            kappa: init.kappa,
            o_init: init.opacity,
            beta: opt.beta,
            tau_occ: DEFAULT_TAU_OCC,
            voxel_size: DEFAULT_VOXEL_SIZE,
            pixel_stride: DEFAULT_PIXEL_STRIDE,
            frame_stride: DEFAULT_FRAME_STRIDE,
            max_range: None,
            association_radius: AssociationParams::default().radius,
            feature_dim: None,
            seed: None,
            max_iters: opt.max_iters,
            lr_scale: opt.lr_scale,
            lr_rotation: opt.lr_rotation,
            lr_opacity: opt.lr_opacity,
            lr_color: opt.lr_color,
            tol: opt.tol,
            tolerance_voxels: DEFAULT_TOLERANCE_VOXELS,
            dilate: false,
        }
    }
}

fn check(ok: bool, field: &str, msg: &str) -> Result<()> {
    if ok {
        Ok(())
    } else {
        Err(Error::Schema {
            field: field.into(),
            reason: msg.into(),
        })
    }
}

fn positive(v: f64) -> bool {
    v > 0.0 && v.is_finite()
}

fn non_negative(v: f64) -> bool {
    v >= 0.0 && v.is_finite()
}

impl PipelineConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Io {
            path: path.into(),
            source: e,
        })?;
        serde_json::from_str(&text).map_err(|e| {
            let msg = e.to_string();
            let field = msg.split('`').nth(1).unwrap_or("config").to_string();
            Error::Schema { field, reason: msg }
        })
    }

    pub fn validate(&self) -> Result<()> {
        check(positive(self.gamma), "gamma", "must be positive")?;
        check(positive(self.kappa), "kappa", "must be positive")?;
        check((0.0..=1.0).contains(&self.o_init), "o_init", "must lie in [0, 1]")?;
        check(non_negative(self.beta), "beta", "must be non-negative")?;
        check((0.0..=1.0).contains(&self.tau_occ), "tau_occ", "must lie in [0, 1]")?;
        check(positive(self.voxel_size), "voxel_size", "must be positive")?;
        check(self.pixel_stride >= 1, "pixel_stride", "must be at least 1")?;
        check(self.frame_stride >= 1, "frame_stride", "must be at least 1")?;
        check(self.max_range.is_none_or(positive), "max_range", "must be positive")?;
        check(positive(self.association_radius), "association_radius", "must be positive")?;
        check(self.feature_dim != Some(0), "feature_dim", "must be at least 1")?;
        for (name, v) in [
            ("lr_scale", self.lr_scale),
            ("lr_rotation", self.lr_rotation),
            ("lr_opacity", self.lr_opacity),
            ("lr_color", self.lr_color),
            ("tol", self.tol),
            ("tolerance_voxels", self.tolerance_voxels),
        ] {
            check(non_negative(v), name, "must be finite and non-negative")?;
        }
        Ok(())
    }

    pub fn init_params(&self) -> InitParams {
        InitParams {
            gamma: self.gamma,
            kappa: self.kappa,
            opacity: self.o_init,
        }
    }

    pub fn optimizer(&self) -> OptimizerConfig {
        OptimizerConfig {
            beta: self.beta,
            lr_scale: self.lr_scale,
            lr_rotation: self.lr_rotation,
            lr_opacity: self.lr_opacity,
            lr_color: self.lr_color,
            max_iters: self.max_iters,
            tol: self.tol,
        }
    }

    pub fn association(&self) -> AssociationParams {
        AssociationParams {
            radius: self.association_radius,
            pixel_stride: self.pixel_stride,
        }
    }
}
