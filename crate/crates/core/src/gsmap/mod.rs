//! The language-embedded Gaussian map.

mod associate;
mod frames;
mod index;
mod init;
pub mod io;
mod map;
mod primitive;

pub use associate::{associate_semantics, AssociationParams, AssociationStats};
pub use frames::{ColorImage, DepthFrame, LabelImage, PixelEmbeddingFrame};
pub use index::SpatialIndex;
pub use init::{backproject, init_map, init_primitive, ray_aligned_rotation, BackprojectedPoint, InitParams, InitView, DEFAULT_COLOR};
pub use map::{insert_batch, query_neighbors, transform_map, GaussianMap, MapProvenance};
pub use primitive::{
    covariance, feature_norm, mahalanobis_sq, precision, GaussianPrimitive, PrimitiveShape, COVARIANCE_EPSILON, SCALE_FLOOR,
    SUPPORT_MAHALANOBIS_SQ,
};
