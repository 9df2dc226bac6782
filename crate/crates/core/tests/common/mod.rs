//! Generators and index-free reference implementations shared by the
//! integration suites.
#![allow(dead_code)]

use std::collections::BTreeMap;

use freeocc::bench::{LabeledFrame, LabeledFrameSet};
use freeocc::geometry::{CameraIntrinsics, Mat3, Pose, RotationQuaternion, SimilarityTransform, Vec3};
use freeocc::gsmap::{mahalanobis_sq, precision, ColorImage, DepthFrame, GaussianMap, GaussianPrimitive, LabelImage, SUPPORT_MAHALANOBIS_SQ};
use freeocc::occproj::{argmax_label, compose_occupancy, expected_feature, spatial_support, text_similarity, GridSpec, OccupancyField, TextEmbeddingSet};
use freeocc::splatopt::{params_loss, params_loss_gradient, ray_approach, RenderOptions, SplatParams, TrainingFrame};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_rotation(rng: &mut ChaCha8Rng) -> RotationQuaternion {
    loop {
        let q: [f64; 4] = std::array::from_fn(|_| rng.random_range(-1.0..1.0));
        let n = q.iter().map(|v| v * v).sum::<f64>();
        if n > 0.01 && n <= 1.0 {
            return RotationQuaternion::from_wxyz(q[0], q[1], q[2], q[3]).unwrap();
        }
    }
}

pub fn random_unit(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f32> {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect();
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n > 0.1 {
            return v.iter().map(|x| (x / n) as f32).collect();
        }
    }
}

/// A random projection problem: map, grid, threshold, and categories.
pub struct Instance {
    pub map: GaussianMap,
    pub spec: GridSpec,
    pub tau: f64,
    pub texts: Option<TextEmbeddingSet>,
}

pub fn random_instance(rng: &mut ChaCha8Rng) -> Instance {
    let dims: [u32; 3] = std::array::from_fn(|_| rng.random_range(2..=32));
    let v = rng.random_range(0.05..0.2);
    let origin = Vec3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
    let spec = GridSpec::new(origin, dims, v).unwrap();
    let ext = Vec3::new(dims[0] as f64, dims[1] as f64, dims[2] as f64) * v;
    let dim = rng.random_range(2..=8);
    let with_texts = rng.random_bool(0.8);
    let n = rng.random_range(1..=1000);
    let prims = (0..n)
        .map(|_| {
            let m = origin + Vec3::new(rng.random_range(-0.1..1.1) * ext.x, rng.random_range(-0.1..1.1) * ext.y, rng.random_range(-0.1..1.1) * ext.z);
            let s = Vec3::from_fn(|_, _| rng.random_range(0.2..2.0) * v);
            let mut g = GaussianPrimitive::new(m, s, random_rotation(rng), rng.random_range(0.05..1.0), [0.5; 3]).unwrap();
            if with_texts && rng.random_bool(0.9) {
                g.feature = Some(random_unit(rng, dim));
            }
            g
        })
        .collect();
    let map = GaussianMap::from_primitives(prims, if with_texts { dim } else { 0 }).unwrap();
    let texts = with_texts.then(|| {
        let c = rng.random_range(1..=6);
        TextEmbeddingSet::new((0..c).map(|i| format!("class{i}")).collect(), (0..c).map(|_| random_unit(rng, dim)).collect()).unwrap()
    });
    Instance {
        map,
        spec,
        tau: rng.random_range(0.05..0.95),
        texts,
    }
}

/// Index-free projector: every primitive is tested against every voxel.
pub fn brute_project(map: &GaussianMap, spec: &GridSpec, tau: f64, texts: Option<&TextEmbeddingSet>) -> OccupancyField {
    let prims = map.primitives();
    let precisions: Vec<Mat3> = prims.iter().map(precision).collect();
    let mut out = OccupancyField::empty(*spec);
    for idx in 0..spec.len() {
        let x = spec.center_of(idx);
        let near: Vec<&GaussianPrimitive> = prims
            .iter()
            .zip(&precisions)
            .filter(|(g, p)| mahalanobis_sq(p, &g.mean, &x) <= SUPPORT_MAHALANOBIS_SQ)
            .map(|(g, _)| g)
            .collect();
        let alphas: Vec<f64> = near.iter().map(|g| spatial_support(g, &x)).collect();
        let occ = compose_occupancy(&alphas).unwrap() as f32;
        out.occupancy[idx] = occ;
        let Some(t) = texts else { continue };
        if (occ as f64) < tau {
            continue;
        }
        let featured: Vec<GaussianPrimitive> = near.iter().filter(|g| g.feature.is_some()).map(|g| (*g).clone()).collect();
        if featured.is_empty() {
            continue;
        }
        if let Ok(f) = expected_feature(&featured, &x) {
            out.labels[idx] = argmax_label(&text_similarity(&f, t).unwrap()).unwrap_or(0);
        }
    }
    out
}

pub fn gating_violations(f: &OccupancyField, tau: f64) -> usize {
    f.labels.iter().zip(&f.occupancy).filter(|(&l, &o)| l > 0 && l < 255 && (o as f64) < tau).count()
}

/// Small scene whose losses are smooth under parameter perturbation:
/// no contribution sits near the 3σ cutoff and no two share a depth.
pub fn smooth_scene(rng: &mut ChaCha8Rng, n: usize) -> (Vec<SplatParams>, Vec<TrainingFrame>) {
    let k = CameraIntrinsics::new(10.0, 10.0, 2.5, 2.5, 6, 6).unwrap();
    loop {
        let params: Vec<SplatParams> = (0..n)
            .map(|_| SplatParams {
                mean: Vec3::new(rng.random_range(-0.7..0.7), rng.random_range(-0.7..0.7), rng.random_range(2.0..3.5)),
                scale: Vec3::from_fn(|_, _| rng.random_range(0.06..0.3)),
                rotation: [rng.random_range(0.3..1.0), rng.random_range(-0.5..0.5), rng.random_range(-0.5..0.5), rng.random_range(-0.5..0.5)],
                opacity: rng.random_range(0.1..0.9),
                color: [rng.random(), rng.random(), rng.random()],
            })
            .collect();
        let poses = [Pose::identity(), Pose::new(random_small_rotation(rng), Vec3::new(0.1, -0.1, 0.05))];
        let frames: Vec<TrainingFrame> = poses
            .iter()
            .map(|pose| {
                let n = k.pixel_count();
                let img = (0..n).map(|_| [rng.random(), rng.random(), rng.random()]).collect();
                let depth = (0..n).map(|_| if rng.random_bool(0.8) { rng.random_range(1.5..4.0) } else { 0.0 }).collect();
                TrainingFrame::new(ColorImage::new(k.width, k.height, img).unwrap(), DepthFrame::new(k.width, k.height, depth).unwrap(), k, *pose)
                    .unwrap()
            })
            .collect();
        if frames.iter().all(|f| smooth_at(&params, f)) {
            return (params, frames);
        }
    }
}

fn random_small_rotation(rng: &mut ChaCha8Rng) -> RotationQuaternion {
    let axis = Vec3::from_fn(|_, _| rng.random_range(-1.0..1.0));
    RotationQuaternion::from_axis_angle(&(axis + Vec3::new(0.0, 0.0, 1e-3)), rng.random_range(-0.1..0.1)).unwrap()
}

fn smooth_at(params: &[SplatParams], f: &TrainingFrame) -> bool {
    let r = f.pose.rotation.to_matrix();
    for v in 0..f.intrinsics.height {
        for u in 0..f.intrinsics.width {
            let dir = (r * f.intrinsics.unproject(u as f64, v as f64)).normalize();
            let mut ts = Vec::new();
            for p in params {
                let a = ray_approach(&p.precision(), &p.mean, &f.pose.translation, &dir);
                if (a.d_min - 9.0).abs() < 0.02 {
                    return false;
                }
                if a.d_min <= 9.0 {
                    ts.push(a.t);
                }
            }
            ts.sort_by(f64::total_cmp);
            if ts.windows(2).any(|w| w[1] - w[0] < 1e-4) {
                return false;
            }
        }
    }
    true
}

/// Worst gradient error over every free component of every primitive,
/// as `max(|a − f| / max(|a|, |f|))` over components with `|a − f| > 1e-8`.
pub fn gradient_error(params: &[SplatParams], frames: &[TrainingFrame], beta: f64, h: f64) -> (usize, f64) {
    let opts = RenderOptions::default();
    let (_, grads) = params_loss_gradient(params, frames, beta, opts).unwrap();
    let loss = |p: &[SplatParams]| params_loss(p, frames, beta, opts).unwrap();
    let mut worst: f64 = 0.0;
    let mut checked = 0;
    for (i, g) in grads.iter().enumerate() {
        let mut pairs: Vec<(f64, fn(&mut SplatParams, usize, f64), usize)> = Vec::new();
        for a in 0..3 {
            pairs.push((g.scale[a], |p, a, d| p.scale[a] += d, a));
            pairs.push((g.color[a], |p, a, d| p.color[a] += d, a));
        }
        for a in 0..4 {
            pairs.push((g.rotation[a], |p, a, d| p.rotation[a] += d, a));
        }
        pairs.push((g.opacity, |p, _, d| p.opacity += d, 0));
        for (analytic, bump, a) in pairs {
            let mut hi = params.to_vec();
            bump(&mut hi[i], a, h);
            let mut lo = params.to_vec();
            bump(&mut lo[i], a, -h);
            let fd = (loss(&hi) - loss(&lo)) / (2.0 * h);
            checked += 1;
            let diff = (analytic - fd).abs();
            if diff > 1e-8 {
                worst = worst.max(diff / analytic.abs().max(fd.abs()));
            }
        }
    }
    (checked, worst)
}

pub fn random_similarity(rng: &mut ChaCha8Rng, with_scale: bool) -> SimilarityTransform {
    let s = if with_scale { rng.random_range(0.2..5.0) } else { 1.0 };
    let t = Vec3::from_fn(|_, _| rng.random_range(-10.0..10.0));
    SimilarityTransform::new(s, random_rotation(rng), t).unwrap()
}

/// Random posed labeled frames looking roughly at the origin.
pub fn random_labeled_frames(rng: &mut ChaCha8Rng) -> LabeledFrameSet {
    let (w, h) = (rng.random_range(4..=12), rng.random_range(4..=10));
    let k = CameraIntrinsics::new(8.0, 8.0, (w - 1) as f64 / 2.0, (h - 1) as f64 / 2.0, w, h).unwrap();
    let n = rng.random_range(1..=6);
    let frames = (0..n)
        .map(|_| {
            let eye = Vec3::from_fn(|_, _| rng.random_range(-2.0..2.0)) + Vec3::new(0.0, 0.0, -3.0);
            let pose = freeocc::geometry::look_at(&eye, &Vec3::from_fn(|_, _| rng.random_range(-0.3..0.3)), &Vec3::y()).unwrap();
            let depth = (0..w * h).map(|_| if rng.random_bool(0.85) { rng.random_range(1.0..5.0) } else { 0.0 }).collect();
            let labels = (0..w * h).map(|_| rng.random_range(0..4u8)).collect();
            LabeledFrame {
                depth: DepthFrame::new(w, h, depth).unwrap(),
                labels: LabelImage::new(w, h, labels).unwrap(),
                intrinsics: k,
                pose,
                color: None,
                embedding: None,
            }
        })
        .collect();
    LabeledFrameSet::new(frames, 1e-3, 10.0).unwrap()
}

/// Per-point binning and majority vote, tallied with a map of counters.
pub fn brute_sparse(frames: &LabeledFrameSet, stride: u32, voxel: f64) -> BTreeMap<[i64; 3], u8> {
    let mut tally: BTreeMap<[i64; 3], BTreeMap<u8, u64>> = BTreeMap::new();
    for f in &frames.frames {
        let r = f.pose.rotation.to_matrix();
        for v in (0..f.depth.height).step_by(stride as usize) {
            for u in (0..f.depth.width).step_by(stride as usize) {
                let d = f.depth.at(u, v);
                if !(d > 0.0) || d > frames.max_range {
                    continue;
                }
                let p = r * (f.intrinsics.unproject(u as f64, v as f64) * d) + f.pose.translation;
                let c = [(p.x / voxel).floor() as i64, (p.y / voxel).floor() as i64, (p.z / voxel).floor() as i64];
                *tally.entry(c).or_default().entry(f.labels.at(u, v)).or_default() += 1;
            }
        }
    }
    tally
        .into_iter()
        .map(|(c, votes)| {
            let top = *votes.values().max().unwrap();
            (c, *votes.iter().find(|(_, &n)| n == top).unwrap().0)
        })
        .collect()
}

/// Dense labels by nearest sparse center within one voxel, searched over
/// every sparse voxel; equal distances go to the smallest coordinate.
pub fn brute_densify(sparse: &BTreeMap<[i64; 3], u8>) -> ([i64; 3], [u32; 3], Vec<u8>) {
    let lo: [i64; 3] = std::array::from_fn(|a| sparse.keys().map(|c| c[a]).min().unwrap());
    let hi: [i64; 3] = std::array::from_fn(|a| sparse.keys().map(|c| c[a]).max().unwrap());
    let dims: [u32; 3] = std::array::from_fn(|a| (hi[a] - lo[a] + 1) as u32);
    let mut labels = Vec::new();
    for k in 0..dims[2] as i64 {
        for j in 0..dims[1] as i64 {
            for i in 0..dims[0] as i64 {
                let c = [lo[0] + i, lo[1] + j, lo[2] + k];
                let mut best: Option<(i64, [i64; 3], u8)> = None;
                for (s, &l) in sparse {
                    let d2: i64 = (0..3).map(|a| (s[a] - c[a]).pow(2)).sum();
                    if d2 <= 1 && best.is_none_or(|(bd, bc, _)| (d2, *s) < (bd, bc)) {
                        best = Some((d2, *s, l));
                    }
                }
                labels.push(best.map_or(0, |b| b.2));
            }
        }
    }
    (lo, dims, labels)
}

/// Observability by explicit world-to-camera transform `Rᵀ(x − t)`.
pub fn brute_mask(spec: &GridSpec, frames: &LabeledFrameSet, stride: usize, tol_voxels: f64) -> Vec<bool> {
    (0..spec.len())
        .map(|idx| {
            let x = spec.center_of(idx);
            frames.frames.iter().step_by(stride).any(|f| {
                let p = f.pose.rotation.to_matrix().transpose() * (x - f.pose.translation);
                if p.z <= 0.0 {
                    return false;
                }
                let k = &f.intrinsics;
                let u = (k.fx * p.x / p.z + k.cx + 0.5).floor();
                let v = (k.fy * p.y / p.z + k.cy + 0.5).floor();
                if u < 0.0 || v < 0.0 || u >= k.width as f64 || v >= k.height as f64 {
                    return false;
                }
                let d = f.depth.at(u as u32, v as u32);
                d > 0.0 && p.z <= d + tol_voxels * spec.voxel_size
            })
        })
        .collect()
}
