//! Training-free open-vocabulary occupancy from language-embedded Gaussian
//! maps.
//!
//! The pipeline runs downstream of a SLAM front end and a vision-language
//! encoder: poses, depth, and per-pixel embeddings are inputs.
//!
//! * [`gsmap`] stores anchored Gaussian primitives and attaches features.
//! * [`splatopt`] renders the map and optimizes shape and appearance with
//!   the means held fixed.
//! * [`occproj`] projects the map onto a voxel grid and labels voxels by
//!   text similarity.
//! * [`bench`] builds ground-truth grids from labeled RGB-D and generates
//!   synthetic scenes.
//! * [`eval`] aligns a prediction to the ground-truth frame and scores it.

pub mod align;
pub mod bench;
pub mod error;
pub mod eval;
pub mod geometry;
pub mod gsmap;
pub mod io;
pub mod occproj;
pub mod pipeline;
pub mod splatopt;
pub mod trajectory;

pub use error::{Error, Result};
