//! Projection of a Gaussian map onto a semantic occupancy grid.

mod grid;
pub mod io;
mod ops;
mod project;
mod text;

pub use grid::{GridSpec, OccupancyField, VoxelFeatures, DEFAULT_VOXEL_SIZE, MAX_CLASS_ID, UNKNOWN_LABEL};
pub use io::{load_field, save_field};
pub use ops::{argmax_label, compose_occupancy, expected_feature, responsibilities, spatial_support, text_similarity, FEATURE_NORM_FLOOR};
pub use project::{project, Projection, ProjectionStats, DEFAULT_TAU_OCC};
pub use text::TextEmbeddingSet;
