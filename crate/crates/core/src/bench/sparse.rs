//! Sparse labeled voxels from labeled depth, and their densification.

use std::collections::BTreeMap;

use rayon::prelude::*;

use super::dataset::LabeledFrameSet;
use crate::error::{Error, Result};
use crate::geometry::Vec3;
use crate::gsmap::backproject;
use crate::occproj::GridSpec;

pub type VoxelCoord = [i64; 3];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SparseVoxel {
    pub label: u8,
    pub point_count: u64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SparseLabeledVoxels {
    pub voxel_size: f64,
    pub voxels: BTreeMap<VoxelCoord, SparseVoxel>,
}

impl SparseLabeledVoxels {
    pub fn len(&self) -> usize {
        self.voxels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.voxels.is_empty()
    }
}

pub fn quantize(p: &Vec3, voxel_size: f64) -> VoxelCoord {
    [0, 1, 2].map(|a| (p[a] / voxel_size).floor() as i64)
}

/// Majority label per voxel from `(voxel, label)` votes; ties go to the
/// lowest label.
pub fn vote(mut votes: Vec<(VoxelCoord, u8)>, voxel_size: f64) -> SparseLabeledVoxels {
    votes.sort_unstable();
    let mut out = SparseLabeledVoxels {
        voxel_size,
        voxels: BTreeMap::new(),
    };
    for group in votes.chunk_by(|a, b| a.0 == b.0) {
        let mut best = (0u8, 0u64);
        let mut total = 0;
        // labels are sorted within the group, so a strict > keeps the lowest on ties
        for run in group.chunk_by(|a, b| a.1 == b.1) {
            let n = run.len() as u64;
            total += n;
            if n > best.1 {
                best = (run[0].1, n);
            }
        }
        out.voxels.insert(group[0].0, SparseVoxel { label: best.0, point_count: total });
    }
    out
}

/// Back-projects every `pixel_stride`-th valid pixel of every frame, bins
/// it by `floor(p / voxel_size)`, and takes a majority vote per voxel.
pub fn extract_sparse_voxels(frames: &LabeledFrameSet, pixel_stride: u32, voxel_size: f64) -> Result<SparseLabeledVoxels> {
    if !(voxel_size > 0.0) {
        return Err(Error::invalid(format!("voxel size {voxel_size} must be positive")));
    }
    if frames.frames.is_empty() {
        return Err(Error::invalid("no frames to extract voxels from"));
    }
    let per_frame = frames
        .frames
        .par_iter()
        .map(|f| {
            Ok(backproject(&f.depth, &f.intrinsics, &f.pose, pixel_stride)?
                .into_iter()
                .filter(|p| p.depth <= frames.max_range)
                .map(|p| (quantize(&p.world, voxel_size), f.labels.at(p.u, p.v)))
                .collect::<Vec<_>>())
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(vote(per_frame.concat(), voxel_size))
}

/// Face-neighbor offsets in lexicographic order of the resulting coordinate.
const FACE_OFFSETS: [[i64; 3]; 6] = [[-1, 0, 0], [0, -1, 0], [0, 0, -1], [0, 0, 1], [0, 1, 0], [1, 0, 0]];

/// Dense grid over the sparse extent. Every cell takes the label of its
/// nearest sparse voxel when that voxel's center lies within one voxel;
/// otherwise 0. On integer coordinates that means the cell itself or,
/// failing that, the lexicographically smallest face neighbor.
pub fn densify_grid(sparse: &SparseLabeledVoxels) -> Result<(GridSpec, Vec<u8>)> {
    let (Some(first), Some(_)) = (sparse.voxels.keys().next(), sparse.voxels.keys().last()) else {
        return Err(Error::invalid("cannot densify an empty voxel set"));
    };
    let mut lo = *first;
    let mut hi = *first;
    for c in sparse.voxels.keys() {
        for a in 0..3 {
            lo[a] = lo[a].min(c[a]);
            hi[a] = hi[a].max(c[a]);
        }
    }
    let dims = [0, 1, 2].map(|a| (hi[a] - lo[a] + 1) as u32);
    let origin = Vec3::new(lo[0] as f64, lo[1] as f64, lo[2] as f64) * sparse.voxel_size;
    let spec = GridSpec::new(origin, dims, sparse.voxel_size)?;
    let labels = (0..spec.len())
        .into_par_iter()
        .map(|idx| {
            let [i, j, k] = spec.unravel(idx);
            let c = [lo[0] + i as i64, lo[1] + j as i64, lo[2] + k as i64];
            if let Some(v) = sparse.voxels.get(&c) {
                return v.label;
            }
            FACE_OFFSETS
                .iter()
                .find_map(|o| sparse.voxels.get(&[c[0] + o[0], c[1] + o[1], c[2] + o[2]]))
                .map_or(0, |v| v.label)
        })
        .collect();
    Ok((spec, labels))
}
