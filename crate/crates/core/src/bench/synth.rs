//! Synthetic box rooms with analytic depth, labels, embeddings, and ground
//! truth.
//!
//! Rays that miss every box return no depth (0) and label 0; the room has
//! no walls. Depth is quantized to the depth factor and colors to 8 bits at
//! generation time so the rasters survive a PNG round trip unchanged.

use std::f64::consts::TAU;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::dataset::{DatasetManifest, FrameEntry, LabeledFrame, LabeledFrameSet, DEFAULT_DEPTH_FACTOR, DEFAULT_MAX_RANGE};
use super::mask::{assemble_benchmark, observability_mask, DEFAULT_FRAME_STRIDE, DEFAULT_TOLERANCE_VOXELS};
use crate::error::{Error, Result};
use crate::geometry::{look_at, CameraIntrinsics, Pose, Vec3};
use crate::gsmap::{ColorImage, DepthFrame, LabelImage, PixelEmbeddingFrame};
use crate::io;
use crate::occproj::{save_field, GridSpec, OccupancyField, TextEmbeddingSet, DEFAULT_VOXEL_SIZE, MAX_CLASS_ID};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RoomSpec {
    pub min: [f64; 3],
    pub max: [f64; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoxSpec {
    pub name: String,
    pub min: [f64; 3],
    pub max: [f64; 3],
    pub class_id: u8,
    pub color: [f64; 3],
    pub feature_id: usize,
}

impl BoxSpec {
    /// Half-open containment `[min, max)` on every axis.
    pub fn contains(&self, p: &Vec3) -> bool {
        (0..3).all(|a| p[a] >= self.min[a] && p[a] < self.max[a])
    }

    /// Entry parameter of the ray `o + t·d`, if it hits with `t > 0`.
    pub fn intersect(&self, o: &Vec3, d: &Vec3) -> Option<f64> {
        let mut t0 = 0.0f64;
        let mut t1 = f64::INFINITY;
        for a in 0..3 {
            if d[a] == 0.0 {
                if o[a] < self.min[a] || o[a] > self.max[a] {
                    return None;
                }
                continue;
            }
            let inv = 1.0 / d[a];
            let (mut lo, mut hi) = ((self.min[a] - o[a]) * inv, (self.max[a] - o[a]) * inv);
            if lo > hi {
                std::mem::swap(&mut lo, &mut hi);
            }
            t0 = t0.max(lo);
            t1 = t1.min(hi);
        }
        (t0 <= t1 && t0 > 0.0).then_some(t0)
    }
}

/// Orbit around `target` at `radius` and height offset `height`, looking
/// at `target` with world +z up.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CameraPath {
    pub target: [f64; 3],
    pub radius: f64,
    pub height: f64,
    pub frames: usize,
    #[serde(default = "one")]
    pub turns: f64,
    #[serde(default)]
    pub phase: f64,
    pub width: u32,
    pub image_height: u32,
    pub fx: f64,
    pub fy: f64,
}

fn one() -> f64 {
    1.0
}

impl CameraPath {
    pub fn intrinsics(&self) -> Result<CameraIntrinsics> {
        CameraIntrinsics::new(
            self.fx,
            self.fy,
            (self.width as f64 - 1.0) / 2.0,
            (self.image_height as f64 - 1.0) / 2.0,
            self.width,
            self.image_height,
        )
    }

    pub fn poses(&self) -> Result<Vec<Pose>> {
        let target = Vec3::from(self.target);
        (0..self.frames)
            .map(|i| {
                let phi = self.phase + TAU * self.turns * i as f64 / self.frames as f64;
                let eye = target + Vec3::new(self.radius * phi.cos(), self.radius * phi.sin(), self.height);
                look_at(&eye, &target, &Vec3::z())
            })
            .collect()
    }
}

fn default_feature_dim() -> usize {
    16
}

fn default_voxel_size() -> f64 {
    DEFAULT_VOXEL_SIZE
}

fn default_depth_factor() -> f64 {
    DEFAULT_DEPTH_FACTOR
}

fn default_max_range() -> f64 {
    DEFAULT_MAX_RANGE
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneSpec {
    pub room: RoomSpec,
    pub boxes: Vec<BoxSpec>,
    pub camera: CameraPath,
    #[serde(default = "default_feature_dim")]
    pub feature_dim: usize,
    #[serde(default = "default_voxel_size")]
    pub voxel_size: f64,
    #[serde(default = "default_depth_factor")]
    pub depth_factor: f64,
    #[serde(default = "default_max_range")]
    pub max_range: f64,
    /// Standard deviation of Gaussian noise added to pixel embeddings
    /// before renormalization.
    #[serde(default)]
    pub embedding_noise: f64,
    #[serde(default)]
    pub seed: u64,
}

impl SceneSpec {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let s: Self = serde_json::from_str(&text).map_err(|e| Error::schema("scene", e.to_string()))?;
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        let (lo, hi) = (Vec3::from(self.room.min), Vec3::from(self.room.max));
        if (0..3).any(|a| !(lo[a] < hi[a])) {
            return Err(Error::schema("room", "min must be below max on every axis"));
        }
        if !(self.voxel_size > 0.0) {
            return Err(Error::schema("voxel_size", "must be positive"));
        }
        if !(self.depth_factor > 0.0) || !(self.max_range > 0.0) {
            return Err(Error::schema("depth_factor", "depth factor and max range must be positive"));
        }
        if !(self.embedding_noise >= 0.0) {
            return Err(Error::schema("embedding_noise", "must be non-negative"));
        }
        for b in &self.boxes {
            if (0..3).any(|a| !(b.min[a] < b.max[a] && b.min[a] >= lo[a] && b.max[a] <= hi[a])) {
                return Err(Error::schema("boxes", format!("box {:?} is empty or leaves the room", b.name)));
            }
            if b.class_id == 0 || b.class_id as usize > MAX_CLASS_ID {
                return Err(Error::schema("boxes", format!("box {:?} has class id {}", b.name, b.class_id)));
            }
            if b.feature_id >= self.feature_dim {
                return Err(Error::schema("boxes", format!("feature id {} needs feature_dim > {}", b.feature_id, b.feature_id)));
            }
            if b.color.iter().any(|c| !(0.0..=1.0).contains(c)) {
                return Err(Error::schema("boxes", "colors must lie in [0, 1]"));
            }
        }
        let n_classes = self.class_count();
        for c in 1..=n_classes {
            let of_class: Vec<&BoxSpec> = self.boxes.iter().filter(|b| b.class_id as usize == c).collect();
            if of_class.is_empty() {
                return Err(Error::schema("boxes", format!("class ids must be contiguous from 1; {c} is missing")));
            }
            if of_class.iter().any(|b| b.feature_id != of_class[0].feature_id || b.name != of_class[0].name) {
                return Err(Error::schema("boxes", format!("boxes of class {c} disagree on name or feature id")));
            }
        }
        let cam = &self.camera;
        if cam.frames == 0 {
            return Err(Error::schema("camera.frames", "must be positive"));
        }
        cam.intrinsics().map_err(|e| Error::schema("camera", e.to_string()))?;
        for p in cam.poses().map_err(|e| Error::schema("camera", e.to_string()))? {
            let c = p.translation;
            if (0..3).any(|a| c[a] < lo[a] || c[a] > hi[a]) {
                return Err(Error::InvalidInput(format!("camera path leaves the room at {:?}", c.as_slice())));
            }
        }
        Ok(())
    }

    pub fn class_count(&self) -> usize {
        self.boxes.iter().map(|b| b.class_id as usize).max().unwrap_or(0)
    }

    /// Grid covering the room with its minimum corner as origin.
    pub fn grid(&self) -> Result<GridSpec> {
        let lo = Vec3::from(self.room.min);
        let ext = Vec3::from(self.room.max) - lo;
        let dims = [0, 1, 2].map(|a| ((ext[a] / self.voxel_size) - 1e-9).ceil().max(1.0) as u32);
        GridSpec::new(lo, dims, self.voxel_size)
    }

    /// Class id of the first box containing `p`, or 0.
    pub fn label_at(&self, p: &Vec3) -> u8 {
        self.boxes.iter().find(|b| b.contains(p)).map_or(0, |b| b.class_id)
    }
}

/// Orthonormal vectors of dimension `dim` drawn from a seeded generator.
pub fn orthonormal_features(count: usize, dim: usize, seed: u64) -> Result<Vec<Vec<f32>>> {
    if count > dim {
        return Err(Error::invalid(format!("cannot draw {count} orthonormal vectors in dimension {dim}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(count);
    while basis.len() < count {
        let mut v: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
        for b in &basis {
            let d: f64 = v.iter().zip(b).map(|(x, y)| x * y).sum();
            v.iter_mut().zip(b).for_each(|(x, y)| *x -= d * y);
        }
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n > 1e-6 {
            basis.push(v.iter().map(|x| x / n).collect());
        }
    }
    Ok(basis.into_iter().map(|b| b.into_iter().map(|x| x as f32).collect()).collect())
}

#[derive(Debug, Clone)]
pub struct SyntheticScene {
    pub frames: LabeledFrameSet,
    /// Box voxelization restricted to the observed region (255 elsewhere).
    pub ground_truth: OccupancyField,
    /// Box voxelization over the whole room, without an unknown region.
    pub voxelized: OccupancyField,
    /// One unit vector per feature id.
    pub features: Vec<Vec<f32>>,
    /// Category names and embeddings in class-id order.
    pub texts: TextEmbeddingSet,
}

/// Label per voxel center from a point-in-box test.
pub fn voxelize_boxes(spec: &SceneSpec, grid: &GridSpec) -> OccupancyField {
    let mut f = OccupancyField::empty(*grid);
    for idx in 0..grid.len() {
        let l = spec.label_at(&grid.center_of(idx));
        f.labels[idx] = l;
        f.occupancy[idx] = if l > 0 { 1.0 } else { 0.0 };
    }
    f
}

fn quantize_color(c: [f64; 3]) -> [f64; 3] {
    c.map(|v| (v.clamp(0.0, 1.0) * 255.0).round() / 255.0)
}

fn render_view(spec: &SceneSpec, k: &CameraIntrinsics, pose: &Pose, features: &[Vec<f32>], noise_seed: u64) -> Result<LabeledFrame> {
    let n = k.pixel_count();
    let d = spec.feature_dim;
    let mut units = vec![0u16; n];
    let mut labels = vec![0u8; n];
    let mut colors = vec![[0.0; 3]; n];
    let mut emb = vec![0.0f32; n * d];
    let r = pose.rotation.to_matrix();
    let mut rng = ChaCha8Rng::seed_from_u64(noise_seed);
    for v in 0..k.height {
        for u in 0..k.width {
            let px = (v * k.width + u) as usize;
            // unnormalized ray with unit camera z, so t is z-depth
            let dir = r * k.unproject(u as f64, v as f64);
            let hit = spec
                .boxes
                .iter()
                .filter_map(|b| b.intersect(&pose.translation, &dir).map(|t| (t, b)))
                .min_by(|a, b| a.0.total_cmp(&b.0));
            let Some((z, b)) = hit else { continue };
            let q = (z / spec.depth_factor).round();
            if z > spec.max_range || q > u16::MAX as f64 {
                continue;
            }
            units[px] = q as u16;
            labels[px] = b.class_id;
            colors[px] = quantize_color(b.color);
            let f = &features[b.feature_id];
            let out = &mut emb[px * d..(px + 1) * d];
            if spec.embedding_noise > 0.0 {
                let noisy: Vec<f64> = f
                    .iter()
                    .map(|&x| x as f64 + spec.embedding_noise * rng.sample::<f64, _>(StandardNormal))
                    .collect();
                let nn = noisy.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-12);
                out.iter_mut().zip(&noisy).for_each(|(o, x)| *o = (x / nn) as f32);
            } else {
                out.copy_from_slice(f);
            }
        }
    }
    Ok(LabeledFrame {
        depth: DepthFrame::from_units(k.width, k.height, &units, spec.depth_factor, spec.max_range)?,
        labels: LabelImage::new(k.width, k.height, labels)?,
        intrinsics: *k,
        pose: *pose,
        color: Some(ColorImage::new(k.width, k.height, colors)?),
        embedding: Some(PixelEmbeddingFrame::new(k.width, k.height, d, emb)?),
    })
}

pub fn generate_scene(spec: &SceneSpec) -> Result<SyntheticScene> {
    spec.validate()?;
    let k = spec.camera.intrinsics()?;
    let poses = spec.camera.poses()?;
    let n_features = spec.boxes.iter().map(|b| b.feature_id + 1).max().unwrap_or(0);
    let features = orthonormal_features(n_features, spec.feature_dim, spec.seed)?;
    let frames = poses
        .par_iter()
        .enumerate()
        .map(|(i, pose)| render_view(spec, &k, pose, &features, spec.seed ^ (0x9e37_79b9_7f4a_7c15u64.wrapping_mul(i as u64 + 1))))
        .collect::<Result<Vec<_>>>()?;
    let frames = LabeledFrameSet::new(frames, spec.depth_factor, spec.max_range)?;
    let grid = spec.grid()?;
    let voxelized = voxelize_boxes(spec, &grid);
    let mask = observability_mask(&grid, &frames, DEFAULT_FRAME_STRIDE, DEFAULT_TOLERANCE_VOXELS, false)?;
    let ground_truth = assemble_benchmark(&grid, &voxelized.labels, &mask)?;
    let n_classes = spec.class_count();
    let mut names = Vec::with_capacity(n_classes);
    let mut rows = Vec::with_capacity(n_classes);
    for c in 1..=n_classes {
        let b = spec.boxes.iter().find(|b| b.class_id as usize == c).expect("validated contiguous classes");
        names.push(b.name.clone());
        rows.push(features[b.feature_id].clone());
    }
    let texts = if n_classes > 0 {
        TextEmbeddingSet::normalized(names, rows)?
    } else {
        TextEmbeddingSet::normalized(vec!["background".into()], vec![orthonormal_features(1, spec.feature_dim.max(1), spec.seed)?.remove(0)])?
    };
    Ok(SyntheticScene {
        frames,
        ground_truth,
        voxelized,
        features,
        texts,
    })
}

/// File names used by [`write_dataset`].
pub mod layout {
    pub const MANIFEST: &str = "manifest.json";
    pub const TRAJECTORY: &str = "trajectory.txt";
    pub const GROUND_TRUTH: &str = "gt.occ";
    pub const VOXELIZED: &str = "gt_voxelized.occ";
    pub const TEXTS: &str = "texts.json";
}

/// Writes the frame rasters, manifest, trajectory, ground truth, and text
/// embeddings under `dir`.
pub fn write_dataset(dir: &Path, scene: &SyntheticScene) -> Result<()> {
    for sub in ["depth", "label", "color", "embedding"] {
        let p = dir.join(sub);
        std::fs::create_dir_all(&p).map_err(|e| Error::io(&p, e))?;
    }
    let entries = scene
        .frames
        .frames
        .par_iter()
        .enumerate()
        .map(|(i, f)| {
            let e = FrameEntry {
                depth: format!("depth/{i:06}.png"),
                label: format!("label/{i:06}.png"),
                color: Some(format!("color/{i:06}.png")),
                embedding: Some(format!("embedding/{i:06}.f32")),
            };
            io::write_depth_png(&dir.join(&e.depth), &f.depth, scene.frames.depth_factor)?;
            io::write_label_png(&dir.join(&e.label), &f.labels)?;
            if let (Some(c), Some(path)) = (&f.color, &e.color) {
                io::write_color_png(&dir.join(path), c)?;
            }
            if let (Some(m), Some(path)) = (&f.embedding, &e.embedding) {
                io::write_embedding_raster(&dir.join(path), m)?;
            }
            Ok(e)
        })
        .collect::<Result<Vec<_>>>()?;
    scene.frames.trajectory().save(&dir.join(layout::TRAJECTORY))?;
    let manifest = DatasetManifest {
        intrinsics: scene.frames.frames.first().map(|f| f.intrinsics).ok_or_else(|| Error::invalid("scene has no frames"))?,
        trajectory: layout::TRAJECTORY.into(),
        depth_factor: scene.frames.depth_factor,
        max_range: scene.frames.max_range,
        frames: entries,
    };
    manifest.save(&dir.join(layout::MANIFEST))?;
    save_field(&scene.ground_truth, &dir.join(layout::GROUND_TRUTH))?;
    save_field(&scene.voxelized, &dir.join(layout::VOXELIZED))?;
    scene.texts.save(&dir.join(layout::TEXTS))
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn unit_box_spec() -> SceneSpec {
        SceneSpec {
            room: RoomSpec {
                min: [0.0; 3],
                max: [2.0; 3],
            },
            boxes: vec![BoxSpec {
                name: "cube".into(),
                min: [0.0; 3],
                max: [1.0; 3],
                class_id: 1,
                color: [0.8, 0.2, 0.1],
                feature_id: 0,
            }],
            camera: CameraPath {
                target: [1.0, 1.0, 0.5],
                radius: 0.9,
                height: 0.8,
                frames: 8,
                turns: 1.0,
                phase: 0.3,
                width: 32,
                image_height: 24,
                fx: 30.0,
                fy: 30.0,
            },
            feature_dim: 4,
            voxel_size: 0.08,
            depth_factor: 1e-3,
            max_range: 10.0,
            embedding_noise: 0.0,
            seed: 3,
        }
    }

    #[test]
    fn unit_box_voxel_count() {
        let spec = unit_box_spec();
        let s = generate_scene(&spec).unwrap();
        assert_eq!(s.voxelized.spec.dims, [25, 25, 25]);
        assert_eq!(s.voxelized.labels.iter().filter(|&&l| l == 1).count(), 1728);
        assert!(s.ground_truth.labels.iter().all(|&l| l == 0 || l == 1 || l == 255));
        assert!(s.ground_truth.labels.iter().any(|&l| l == 1));
    }

    #[test]
    fn deterministic() {
        let mut spec = unit_box_spec();
        spec.embedding_noise = 0.1;
        let a = generate_scene(&spec).unwrap();
        let b = generate_scene(&spec).unwrap();
        assert_eq!(a.ground_truth, b.ground_truth);
        for (x, y) in a.frames.frames.iter().zip(&b.frames.frames) {
            assert_eq!(x.depth, y.depth);
            assert_eq!(x.embedding, y.embedding);
        }
    }

    #[test]
    fn empty_room_has_no_occupied_truth() {
        let mut spec = unit_box_spec();
        spec.boxes.clear();
        let s = generate_scene(&spec).unwrap();
        assert!(s.ground_truth.labels.iter().all(|&l| l == 0 || l == 255));
    }

    #[test]
    fn path_leaving_room() {
        let mut spec = unit_box_spec();
        spec.camera.radius = 3.0;
        assert!(matches!(generate_scene(&spec), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn features_orthonormal() {
        let f = orthonormal_features(5, 8, 1).unwrap();
        for i in 0..5 {
            for j in 0..5 {
                let d: f64 = f[i].iter().zip(&f[j]).map(|(a, b)| *a as f64 * *b as f64).sum();
                assert!((d - if i == j { 1.0 } else { 0.0 }).abs() < 1e-6);
            }
        }
        assert!(orthonormal_features(3, 2, 0).is_err());
    }

    #[test]
    fn ray_box() {
        let b = unit_box_spec().boxes.remove(0);
        assert_eq!(b.intersect(&Vec3::new(0.5, 0.5, -1.0), &Vec3::z()), Some(1.0));
        assert_eq!(b.intersect(&Vec3::new(2.0, 0.5, -1.0), &Vec3::z()), None);
        assert_eq!(b.intersect(&Vec3::new(0.5, 0.5, 2.0), &Vec3::z()), None);
    }
}
