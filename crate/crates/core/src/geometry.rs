//! Geometry primitives shared by every stage of the pipeline.
//!
//! Poses are camera-to-world and follow the OpenCV camera convention
//! (+x right, +y down, +z forward). All arithmetic is in `f64`.

use nalgebra::{Matrix3, Rotation3, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Vec3 = Vector3<f64>;
pub type Mat3 = Matrix3<f64>;

/// Accepted deviation from unit norm for externally supplied quaternions.
pub const UNIT_TOLERANCE: f64 = 1e-6;

/// Unit quaternion stored as `(w, x, y, z)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RotationQuaternion {
    pub w: f64,
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Default for RotationQuaternion {
    fn default() -> Self {
        Self::identity()
    }
}

impl RotationQuaternion {
    pub const fn identity() -> Self {
        Self {
            w: 1.0,
            x: 0.0,
            y: 0.0,
            z: 0.0,
        }
    }

    /// Normalizes an arbitrary non-zero quaternion.
    pub fn from_wxyz(w: f64, x: f64, y: f64, z: f64) -> Result<Self> {
        let n = (w * w + x * x + y * y + z * z).sqrt();
        if !n.is_finite() || n < 1e-12 {
            return Err(Error::invalid(format!(
                "quaternion ({w}, {x}, {y}, {z}) cannot be normalized"
            )));
        }
        Ok(Self {
            w: w / n,
            x: x / n,
            y: y / n,
            z: z / n,
        })
    }

    /// Accepts a quaternion that is already unit-norm within [`UNIT_TOLERANCE`].
    pub fn from_unit_wxyz(w: f64, x: f64, y: f64, z: f64) -> Result<Self> {
        let n = (w * w + x * x + y * y + z * z).sqrt();
        if !n.is_finite() || (n - 1.0).abs() > UNIT_TOLERANCE {
            return Err(Error::invalid(format!(
                "quaternion ({w}, {x}, {y}, {z}) has norm {n}, expected 1"
            )));
        }
        if (n - 1.0).abs() <= 1e-12 {
            // already unit to working precision; keep the exact bits
            return Ok(Self { w, x, y, z });
        }
        Self::from_wxyz(w, x, y, z)
    }

    pub fn from_axis_angle(axis: &Vec3, angle: f64) -> Result<Self> {
        let n = axis.norm();
        if !(n > 0.0) || !angle.is_finite() {
            return Err(Error::invalid("axis-angle rotation needs a non-zero axis"));
        }
        let a = axis / n;
        let (s, c) = (0.5 * angle).sin_cos();
        Self::from_wxyz(c, a.x * s, a.y * s, a.z * s)
    }

    /// Quaternion of a proper rotation matrix, canonicalized to `w >= 0`.
    pub fn from_matrix(m: &Mat3) -> Self {
        let q = UnitQuaternion::from_rotation_matrix(&Rotation3::from_matrix_unchecked(*m));
        let (w, x, y, z) = (q.w, q.i, q.j, q.k);
        let sign = if w < 0.0 { -1.0 } else { 1.0 };
        Self::from_wxyz(sign * w, sign * x, sign * y, sign * z).unwrap_or_default()
    }

    pub fn to_array(&self) -> [f64; 4] {
        [self.w, self.x, self.y, self.z]
    }

    pub fn to_matrix(&self) -> Mat3 {
        rotation_matrix_raw(self.w, self.x, self.y, self.z)
    }

    pub fn conjugate(&self) -> Self {
        Self {
            w: self.w,
            x: -self.x,
            y: -self.y,
            z: -self.z,
        }
    }

    /// Hamilton product `self * rhs`, renormalized.
    pub fn compose(&self, rhs: &Self) -> Self {
        let (a, b) = (self, rhs);
        let w = a.w * b.w - a.x * b.x - a.y * b.y - a.z * b.z;
        let x = a.w * b.x + a.x * b.w + a.y * b.z - a.z * b.y;
        let y = a.w * b.y - a.x * b.z + a.y * b.w + a.z * b.x;
        let z = a.w * b.z + a.x * b.y - a.y * b.x + a.z * b.w;
        Self::from_wxyz(w, x, y, z).unwrap_or_default()
    }

    pub fn rotate(&self, v: &Vec3) -> Vec3 {
        self.to_matrix() * v
    }
}

/// Rotation matrix of `(w, x, y, z)` assuming unit norm.
pub(crate) fn rotation_matrix_raw(w: f64, x: f64, y: f64, z: f64) -> Mat3 {
    Mat3::new(
        1.0 - 2.0 * (y * y + z * z),
        2.0 * (x * y - w * z),
        2.0 * (x * z + w * y),
        2.0 * (x * y + w * z),
        1.0 - 2.0 * (x * x + z * z),
        2.0 * (y * z - w * x),
        2.0 * (x * z - w * y),
        2.0 * (y * z + w * x),
        1.0 - 2.0 * (x * x + y * y),
    )
}

/// Rotation matrix of a `(w, x, y, z)` quaternion.
///
/// Fails when the quaternion deviates from unit norm by more than
/// [`UNIT_TOLERANCE`].
pub fn quaternion_to_matrix(q: [f64; 4]) -> Result<Mat3> {
    let [w, x, y, z] = q;
    Ok(RotationQuaternion::from_unit_wxyz(w, x, y, z)?.to_matrix())
}

/// Rigid transform (element of SE(3)).
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Pose {
    pub rotation: RotationQuaternion,
    pub translation: Vec3,
}

impl Pose {
    pub fn identity() -> Self {
        Self::default()
    }

    pub fn new(rotation: RotationQuaternion, translation: Vec3) -> Self {
        Self {
            rotation,
            translation,
        }
    }

    pub fn from_translation(t: Vec3) -> Self {
        Self::new(RotationQuaternion::identity(), t)
    }

    pub fn transform_point(&self, p: &Vec3) -> Vec3 {
        self.rotation.to_matrix() * p + self.translation
    }

    /// Camera center when the pose is camera-to-world.
    pub fn center(&self) -> Vec3 {
        self.translation
    }
}

/// `a ∘ b`: applies `b` first, then `a`.
pub fn compose_pose(a: &Pose, b: &Pose) -> Pose {
    let ra = a.rotation.to_matrix();
    Pose {
        rotation: a.rotation.compose(&b.rotation),
        translation: ra * b.translation + a.translation,
    }
}

pub fn invert_pose(a: &Pose) -> Pose {
    let inv = a.rotation.conjugate();
    Pose {
        rotation: inv,
        translation: -(inv.to_matrix() * a.translation),
    }
}

/// `x' = s·R·x + t`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimilarityTransform {
    pub scale: f64,
    pub rotation: RotationQuaternion,
    pub translation: Vec3,
}

impl Default for SimilarityTransform {
    fn default() -> Self {
        Self::identity()
    }
}

impl SimilarityTransform {
    pub fn identity() -> Self {
        Self {
            scale: 1.0,
            rotation: RotationQuaternion::identity(),
            translation: Vec3::zeros(),
        }
    }

    pub fn new(scale: f64, rotation: RotationQuaternion, translation: Vec3) -> Result<Self> {
        if !(scale > 0.0) || !scale.is_finite() {
            return Err(Error::invalid(format!("similarity scale must be positive, got {scale}")));
        }
        Ok(Self {
            scale,
            rotation,
            translation,
        })
    }

    pub fn from_pose(p: &Pose) -> Self {
        Self {
            scale: 1.0,
            rotation: p.rotation,
            translation: p.translation,
        }
    }

    pub fn inverse(&self) -> Self {
        let r_inv = self.rotation.conjugate();
        let s_inv = 1.0 / self.scale;
        Self {
            scale: s_inv,
            rotation: r_inv,
            translation: -(r_inv.to_matrix() * self.translation) * s_inv,
        }
    }

    /// Applies the transform to a camera-to-world pose: the camera center
    /// moves like a point and the orientation is left-multiplied by `R`.
    pub fn apply_to_pose(&self, p: &Pose) -> Pose {
        Pose {
            rotation: self.rotation.compose(&p.rotation),
            translation: apply_similarity(self, &p.translation),
        }
    }
}

pub fn apply_similarity(t: &SimilarityTransform, p: &Vec3) -> Vec3 {
    t.rotation.to_matrix() * p * t.scale + t.translation
}

/// Pinhole intrinsics; pixel `(u, v)` has its center at integer coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraIntrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: u32,
    pub height: u32,
}

impl CameraIntrinsics {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64, width: u32, height: u32) -> Result<Self> {
        let k = Self {
            fx,
            fy,
            cx,
            cy,
            width,
            height,
        };
        k.validate()?;
        Ok(k)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.fx > 0.0 && self.fy > 0.0) || !self.fx.is_finite() || !self.fy.is_finite() {
            return Err(Error::invalid("focal lengths must be positive"));
        }
        if self.width == 0 || self.height == 0 {
            return Err(Error::invalid("image dimensions must be positive"));
        }
        if !(self.cx >= 0.0 && self.cx < self.width as f64)
            || !(self.cy >= 0.0 && self.cy < self.height as f64)
        {
            return Err(Error::invalid("principal point must lie inside the image"));
        }
        Ok(())
    }

    /// Camera-frame direction through `(u, v)` with unit z component.
    pub fn unproject(&self, u: f64, v: f64) -> Vec3 {
        Vec3::new((u - self.cx) / self.fx, (v - self.cy) / self.fy, 1.0)
    }

    /// Image coordinates of a camera-frame point (no visibility check).
    pub fn project(&self, p: &Vec3) -> (f64, f64) {
        (self.fx * p.x / p.z + self.cx, self.fy * p.y / p.z + self.cy)
    }

    pub fn pixel_count(&self) -> usize {
        self.width as usize * self.height as usize
    }
}

/// Camera-to-world rotation looking from `eye` toward `target`, with image
/// "up" aligned to world `up` as closely as possible.
pub fn look_at(eye: &Vec3, target: &Vec3, up: &Vec3) -> Result<Pose> {
    let z = target - eye;
    if z.norm() < 1e-12 {
        return Err(Error::invalid("look_at: eye and target coincide"));
    }
    let z = z.normalize();
    let x = z.cross(up);
    if x.norm() < 1e-9 {
        return Err(Error::invalid("look_at: view direction parallel to up"));
    }
    let x = x.normalize();
    let y = z.cross(&x);
    let m = Mat3::from_columns(&[x, y, z]);
    Ok(Pose::new(RotationQuaternion::from_matrix(&m), *eye))
}
