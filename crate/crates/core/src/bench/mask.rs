//! Observability of voxels from posed depth, and ground-truth assembly.

use rayon::prelude::*;

use super::dataset::LabeledFrameSet;
use crate::error::{Error, Result};
use crate::geometry::invert_pose;
use crate::occproj::{GridSpec, OccupancyField, MAX_CLASS_ID, UNKNOWN_LABEL};

pub const DEFAULT_FRAME_STRIDE: usize = 2;
pub const DEFAULT_TOLERANCE_VOXELS: f64 = 1.0;

/// A voxel is observable when, in some sampled frame, its center lies in
/// front of the camera, projects inside the image (nearest pixel), and is
/// no deeper than the valid measured depth there plus the tolerance.
/// Pixels without a valid measurement observe nothing.
pub fn observability_mask(
    spec: &GridSpec,
    frames: &LabeledFrameSet,
    frame_stride: usize,
    tolerance_voxels: f64,
    dilate: bool,
) -> Result<Vec<bool>> {
    if frame_stride == 0 {
        return Err(Error::invalid("frame stride must be positive"));
    }
    if !(tolerance_voxels >= 0.0) {
        return Err(Error::invalid("tolerance must be non-negative"));
    }
    let tol = tolerance_voxels * spec.voxel_size;
    let views: Vec<_> = frames
        .frames
        .iter()
        .step_by(frame_stride)
        .map(|f| {
            let w2c = invert_pose(&f.pose);
            (f, w2c.rotation.to_matrix(), w2c.translation)
        })
        .collect();
    let mask: Vec<bool> = (0..spec.len())
        .into_par_iter()
        .map(|idx| {
            let x = spec.center_of(idx);
            views.iter().any(|(f, r, t)| {
                let p = r * x + t;
                if !(p.z > 0.0) {
                    return false;
                }
                let (u, v) = f.intrinsics.project(&p);
                let (u, v) = ((u + 0.5).floor(), (v + 0.5).floor());
                if !(u >= 0.0 && v >= 0.0 && u < f.intrinsics.width as f64 && v < f.intrinsics.height as f64) {
                    return false;
                }
                let d = f.depth.at(u as u32, v as u32);
                d > 0.0 && p.z <= d + tol
            })
        })
        .collect();
    Ok(if dilate { dilate6(spec, &mask) } else { mask })
}

/// One step of 6-connected binary dilation.
pub fn dilate6(spec: &GridSpec, mask: &[bool]) -> Vec<bool> {
    let [nx, ny, nz] = spec.dims;
    (0..spec.len())
        .into_par_iter()
        .map(|idx| {
            if mask[idx] {
                return true;
            }
            let [i, j, k] = spec.unravel(idx);
            let mut hit = false;
            for (a, n) in [(0usize, nx), (1, ny), (2, nz)] {
                let c = [i, j, k][a];
                for d in [-1i64, 1] {
                    let cc = c as i64 + d;
                    if cc < 0 || cc >= n as i64 {
                        continue;
                    }
                    let mut q = [i, j, k];
                    q[a] = cc as u32;
                    hit |= mask[spec.linear(q[0], q[1], q[2])];
                }
            }
            hit
        })
        .collect()
}

/// Ground-truth field: unknown (255) outside the mask, the dense label
/// inside it, and occupancy 1 exactly for class labels.
pub fn assemble_benchmark(spec: &GridSpec, labels: &[u8], mask: &[bool]) -> Result<OccupancyField> {
    if labels.len() != spec.len() || mask.len() != spec.len() {
        return Err(Error::invalid("label and mask rasters must match the grid"));
    }
    let mut f = OccupancyField::empty(*spec);
    for idx in 0..spec.len() {
        let l = if mask[idx] { labels[idx] } else { UNKNOWN_LABEL };
        f.labels[idx] = l;
        f.occupancy[idx] = if (1..=MAX_CLASS_ID as u8).contains(&l) { 1.0 } else { 0.0 };
    }
    Ok(f)
}
