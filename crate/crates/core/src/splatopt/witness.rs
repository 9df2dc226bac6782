//! Two maps that render identically along a ray but occupy space
//! differently: one primitive at depth `d` versus two primitives at
//! `z1 < d < z2` whose weights solve `w1 + w2 = w`, `w1·z1 + w2·z2 = w·d`.

use crate::geometry::{CameraIntrinsics, RotationQuaternion, Vec3};
use crate::gsmap::{GaussianMap, GaussianPrimitive};
use crate::occproj::GridSpec;

#[derive(Debug, Clone)]
pub struct AmbiguityWitness {
    pub map_a: GaussianMap,
    pub map_b: GaussianMap,
    /// Camera at the origin looking down +z; the shared ray passes through
    /// the principal point.
    pub intrinsics: CameraIntrinsics,
    pub pose: crate::geometry::Pose,
    /// Column of voxels along the shared ray.
    pub grid: GridSpec,
}

const DEPTH: f64 = 1.0;
const NEAR: f64 = 0.76;
const FAR: f64 = 1.24;
const WEIGHT: f64 = 0.6;
const SIGMA: f64 = 0.03;
const COLOR: [f64; 3] = [0.8, 0.3, 0.2];

fn on_axis(z: f64, opacity: f64) -> GaussianPrimitive {
    GaussianPrimitive::new(Vec3::new(0.0, 0.0, z), Vec3::repeat(SIGMA), RotationQuaternion::identity(), opacity, COLOR)
        .expect("witness primitive is valid")
}

/// Weights `(w1, w2)` of two contributions at `z1`, `z2` matching total
/// weight `w` and weighted depth `w·d`.
pub fn split_weights(w: f64, d: f64, z1: f64, z2: f64) -> (f64, f64) {
    let w1 = w * (z2 - d) / (z2 - z1);
    (w1, w - w1)
}

pub fn ambiguity_witness() -> AmbiguityWitness {
    let (w1, w2) = split_weights(WEIGHT, DEPTH, NEAR, FAR);
    let a1 = w1;
    let a2 = w2 / (1.0 - a1);
    let map_a = GaussianMap::from_primitives(vec![on_axis(DEPTH, WEIGHT)], 0).expect("valid map");
    let map_b = GaussianMap::from_primitives(vec![on_axis(NEAR, a1), on_axis(FAR, a2)], 0).expect("valid map");
    let v = 0.08;
    AmbiguityWitness {
        map_a,
        map_b,
        intrinsics: CameraIntrinsics::new(100.0, 100.0, 8.0, 8.0, 17, 17).expect("valid intrinsics"),
        pose: crate::geometry::Pose::identity(),
        // voxel centers at 0.68, 0.76, ..., 1.32 along the axis
        grid: GridSpec::new(Vec3::new(-0.5 * v, -0.5 * v, 0.64), [1, 1, 9], v).expect("valid grid"),
    }
}
