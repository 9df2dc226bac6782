use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Vec3;

/// Default voxel edge length in meters.
pub const DEFAULT_VOXEL_SIZE: f64 = 0.08;

/// Label of voxels outside the observed region.
pub const UNKNOWN_LABEL: u8 = 255;

/// Largest usable class id; `255` is reserved.
pub const MAX_CLASS_ID: usize = 254;

/// Regular voxel grid; linear indices are x-fastest.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    /// Minimum corner in meters.
    pub origin: Vec3,
    pub dims: [u32; 3],
    pub voxel_size: f64,
}

impl GridSpec {
    pub fn new(origin: Vec3, dims: [u32; 3], voxel_size: f64) -> Result<Self> {
        let g = Self { origin, dims, voxel_size };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        if self.dims.contains(&0) {
            return Err(Error::invalid(format!("grid dims {:?} must be positive", self.dims)));
        }
        if !(self.voxel_size > 0.0 && self.voxel_size.is_finite()) {
            return Err(Error::invalid(format!("voxel size {} must be positive", self.voxel_size)));
        }
        if !self.origin.iter().all(|v| v.is_finite()) {
            return Err(Error::invalid("grid origin must be finite"));
        }
        if self.dims.iter().map(|&d| d as u128).product::<u128>() > u32::MAX as u128 {
            return Err(Error::invalid("grid has too many voxels"));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.dims.iter().map(|&d| d as usize).product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn linear(&self, i: u32, j: u32, k: u32) -> usize {
        let [nx, ny, _] = self.dims;
        i as usize + nx as usize * (j as usize + ny as usize * k as usize)
    }

    #[inline]
    pub fn unravel(&self, idx: usize) -> [u32; 3] {
        let nx = self.dims[0] as usize;
        let ny = self.dims[1] as usize;
        [(idx % nx) as u32, ((idx / nx) % ny) as u32, (idx / (nx * ny)) as u32]
    }

    #[inline]
    pub fn center(&self, i: u32, j: u32, k: u32) -> Vec3 {
        self.origin + Vec3::new(i as f64 + 0.5, j as f64 + 0.5, k as f64 + 0.5) * self.voxel_size
    }

    #[inline]
    pub fn center_of(&self, idx: usize) -> Vec3 {
        let [i, j, k] = self.unravel(idx);
        self.center(i, j, k)
    }

    /// Voxel containing `p`, if any.
    pub fn locate(&self, p: &Vec3) -> Option<[u32; 3]> {
        let mut out = [0u32; 3];
        for a in 0..3 {
            let c = ((p[a] - self.origin[a]) / self.voxel_size).floor();
            if !(c >= 0.0 && c < self.dims[a] as f64) {
                return None;
            }
            out[a] = c as u32;
        }
        Some(out)
    }
}

/// Unit features of occupied voxels keyed by linear index.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct VoxelFeatures {
    pub dim: usize,
    pub entries: BTreeMap<u64, Vec<f32>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OccupancyField {
    pub spec: GridSpec,
    pub occupancy: Vec<f32>,
    /// 0 free or unlabeled, 1..=254 class id, 255 unknown.
    pub labels: Vec<u8>,
    pub features: Option<VoxelFeatures>,
}

impl OccupancyField {
    pub fn empty(spec: GridSpec) -> Self {
        let n = spec.len();
        Self {
            spec,
            occupancy: vec![0.0; n],
            labels: vec![0; n],
            features: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.spec.validate()?;
        let n = self.spec.len();
        if self.occupancy.len() != n || self.labels.len() != n {
            return Err(Error::invalid("occupancy field rasters do not match the grid"));
        }
        if self.occupancy.iter().any(|o| !(0.0..=1.0).contains(o)) {
            return Err(Error::invalid("occupancy values must lie in [0, 1]"));
        }
        if let Some(f) = &self.features {
            for (idx, v) in &f.entries {
                if *idx as usize >= n || v.len() != f.dim {
                    return Err(Error::invalid(format!("bad feature entry at voxel {idx}")));
                }
            }
        }
        Ok(())
    }

    /// Voxels with `occupancy ≥ tau` (known region only).
    pub fn occupied(&self, tau: f64) -> Vec<bool> {
        self.occupancy
            .iter()
            .zip(&self.labels)
            .map(|(&o, &l)| l != UNKNOWN_LABEL && o as f64 >= tau)
            .collect()
    }
}
