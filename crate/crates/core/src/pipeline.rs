//! Stage helpers shared by the command-line front end and tests.

use crate::bench::LabeledFrameSet;
use crate::error::{Error, Result};
use crate::gsmap::{associate_semantics, AssociationParams, AssociationStats, GaussianMap};
use crate::splatopt::TrainingFrame;

/// Every `frame_stride`-th frame as an optimization target. Frames need a
/// color raster.
pub fn training_frames(set: &LabeledFrameSet, frame_stride: usize) -> Result<Vec<TrainingFrame>> {
    if frame_stride == 0 {
        return Err(Error::invalid("frame stride must be positive"));
    }
    set.frames
        .iter()
        .step_by(frame_stride)
        .enumerate()
        .map(|(i, f)| {
            let image = f
                .color
                .clone()
                .ok_or_else(|| Error::invalid(format!("frame {} has no color raster", i * frame_stride)))?;
            TrainingFrame::new(image, f.depth.clone(), f.intrinsics, f.pose)
        })
        .collect()
}

/// Recomputes every primitive's feature from the frames' embedding rasters.
pub fn associate_frames(map: &mut GaussianMap, set: &LabeledFrameSet, params: &AssociationParams) -> Result<AssociationStats> {
    map.clear_semantics();
    let mut total = AssociationStats::default();
    for (i, f) in set.frames.iter().enumerate() {
        let emb = f
            .embedding
            .as_ref()
            .ok_or_else(|| Error::invalid(format!("frame {i} has no embedding raster")))?;
        let s = associate_semantics(map, emb, &f.depth, &f.intrinsics, &f.pose, params)?;
        total.pixels += s.pixels;
        total.matched += s.matched;
    }
    let (prims, accum) = map.accumulators_mut();
    total.touched = accum.iter().filter(|a| a.is_some()).count();
    total.degenerate = prims.iter().zip(accum.iter()).filter(|(g, a)| a.is_some() && g.feature.is_none()).count();
    Ok(total)
}
