//! Ground-truth occupancy grids from labeled RGB-D, and synthetic scenes
//! with analytic truth.

mod dataset;
mod mask;
mod sparse;
pub mod synth;

pub use dataset::{DatasetManifest, FrameEntry, LabeledFrame, LabeledFrameSet, DEFAULT_DEPTH_FACTOR, DEFAULT_MAX_RANGE};
pub use mask::{assemble_benchmark, dilate6, observability_mask, DEFAULT_FRAME_STRIDE, DEFAULT_TOLERANCE_VOXELS};
pub use sparse::{densify_grid, extract_sparse_voxels, quantize, vote, SparseLabeledVoxels, SparseVoxel, VoxelCoord};
pub use synth::{generate_scene, orthonormal_features, voxelize_boxes, write_dataset, BoxSpec, CameraPath, RoomSpec, SceneSpec, SyntheticScene};

/// Default pixel stride for voxel extraction and initialization.
pub const DEFAULT_PIXEL_STRIDE: u32 = 4;
