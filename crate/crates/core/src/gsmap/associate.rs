//! Lifting per-pixel embeddings onto the nearest anchored primitive.

use rustc_hash::FxHashMap;
use serde::{Deserialize, Serialize};

use super::frames::{DepthFrame, PixelEmbeddingFrame};
use super::map::{FeatureAccumulator, GaussianMap};
use crate::error::{Error, Result};
use crate::geometry::{CameraIntrinsics, Pose, Vec3};

/// Features whose aggregate norm falls below this are dropped.
const MIN_FEATURE_NORM: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AssociationParams {
    /// Maximum distance in meters between a lifted pixel and its primitive.
    pub radius: f64,
    pub pixel_stride: u32,
}

impl Default for AssociationParams {
    fn default() -> Self {
        Self {
            radius: 0.08,
            pixel_stride: 4,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct AssociationStats {
    pub pixels: usize,
    pub matched: usize,
    pub touched: usize,
    pub degenerate: usize,
}

/// Hash grid over primitive means with cells of side `radius`.
struct MeanGrid<'a> {
    inv: f64,
    cells: FxHashMap<[i64; 3], Vec<u32>>,
    means: Vec<&'a Vec3>,
}

impl<'a> MeanGrid<'a> {
    fn new(means: Vec<&'a Vec3>, radius: f64) -> Self {
        let inv = 1.0 / radius;
        let mut cells: FxHashMap<[i64; 3], Vec<u32>> = FxHashMap::default();
        for (i, m) in means.iter().enumerate() {
            cells.entry(Self::key(m, inv)).or_default().push(i as u32);
        }
        Self { inv, cells, means }
    }

    fn key(p: &Vec3, inv: f64) -> [i64; 3] {
        [(p.x * inv).floor() as i64, (p.y * inv).floor() as i64, (p.z * inv).floor() as i64]
    }

    /// Nearest mean within `radius`; ties go to the lowest index.
    fn nearest(&self, p: &Vec3, radius: f64) -> Option<usize> {
        let c = Self::key(p, self.inv);
        let r2 = radius * radius;
        let mut best: Option<(f64, u32)> = None;
        for dx in -1..=1 {
            for dy in -1..=1 {
                for dz in -1..=1 {
                    let Some(ids) = self.cells.get(&[c[0] + dx, c[1] + dy, c[2] + dz]) else {
                        continue;
                    };
                    for &i in ids {
                        let d2 = (self.means[i as usize] - p).norm_squared();
                        if d2 > r2 {
                            continue;
                        }
                        let better = match best {
                            None => true,
                            Some((bd, bi)) => d2 < bd || (d2 == bd && i < bi),
                        };
                        if better {
                            best = Some((d2, i));
                        }
                    }
                }
            }
        }
        best.map(|(_, i)| i as usize)
    }
}

/// Attaches each sampled valid-depth pixel's embedding to the nearest
/// primitive within `params.radius`. Embeddings accumulate across calls;
/// every touched primitive ends with the normalized running mean, or no
/// feature when that mean vanishes.
pub fn associate_semantics(
    map: &mut GaussianMap,
    frame: &PixelEmbeddingFrame,
    depth: &DepthFrame,
    k: &CameraIntrinsics,
    pose: &Pose,
    params: &AssociationParams,
) -> Result<AssociationStats> {
    depth.check_matches(k)?;
    if frame.width != k.width || frame.height != k.height {
        return Err(Error::invalid(format!(
            "embedding frame is {}x{} but intrinsics are {}x{}",
            frame.width, frame.height, k.width, k.height
        )));
    }
    if map.is_empty() {
        return Err(Error::invalid("cannot associate semantics with an empty map"));
    }
    if frame.dim == 0 {
        return Err(Error::invalid("embedding dimension must be positive"));
    }
    if map.feature_dim() == 0 {
        map.set_feature_dim(frame.dim);
    } else if map.feature_dim() != frame.dim {
        return Err(Error::invalid(format!(
            "map feature dimension {} conflicts with embedding dimension {}",
            map.feature_dim(),
            frame.dim
        )));
    }
    if !(params.radius > 0.0) || params.pixel_stride == 0 {
        return Err(Error::invalid("association radius and pixel stride must be positive"));
    }

    let points = super::init::backproject(depth, k, pose, params.pixel_stride)?;
    let matches: Vec<(usize, (u32, u32))> = {
        let grid = MeanGrid::new(map.primitives().iter().map(|g| &g.mean).collect(), params.radius);
        points
            .iter()
            .filter_map(|p| grid.nearest(&p.world, params.radius).map(|i| (i, (p.u, p.v))))
            .collect()
    };

    let dim = frame.dim;
    let mut stats = AssociationStats {
        pixels: points.len(),
        matched: matches.len(),
        ..Default::default()
    };
    let (prims, accum) = map.accumulators_mut();
    let mut touched = vec![false; prims.len()];
    for &(i, (u, v)) in &matches {
        let acc = accum[i].get_or_insert_with(|| FeatureAccumulator {
            sum: vec![0.0; dim],
            count: 0,
        });
        for (s, &e) in acc.sum.iter_mut().zip(frame.at(u, v)) {
            *s += e as f64;
        }
        acc.count += 1;
        touched[i] = true;
    }
    for (i, _) in touched.iter().enumerate().filter(|(_, t)| **t) {
        stats.touched += 1;
        let acc = accum[i].as_ref().expect("touched primitives have accumulators");
        let inv_n = 1.0 / acc.count as f64;
        let norm = acc.sum.iter().map(|s| (s * inv_n).powi(2)).sum::<f64>().sqrt();
        prims[i].feature = if norm < MIN_FEATURE_NORM {
            stats.degenerate += 1;
            None
        } else {
            Some(acc.sum.iter().map(|s| (s * inv_n / norm) as f32).collect())
        };
    }
    Ok(stats)
}
