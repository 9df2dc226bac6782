//! Ray-wise alpha compositing of anisotropic Gaussians.
//!
//! Each primitive is evaluated at the point of the ray where its
//! Mahalanobis distance is smallest: for a ray `o + t·d` and precision `Λ`,
//! with `m = o − μ`, the minimizer is `t* = −dᵀΛm / dᵀΛd` and
//! `a = opacity · exp(−½ d_min)`. Contributions are ordered by `t*`
//! (ties by primitive index) and composited front to back.

use rayon::prelude::*;

use super::params::SplatParams;
use crate::error::{Error, Result};
use crate::geometry::{CameraIntrinsics, Mat3, Pose, Vec3};
use crate::gsmap::{GaussianMap, GaussianPrimitive, SUPPORT_MAHALANOBIS_SQ};

/// Contributions whose Mahalanobis minimum lies closer than this to the
/// ray origin are ignored.
pub const NEAR_PLANE: f64 = 1e-6;

/// Rows handled per parallel work item. Fixed so reductions do not depend
/// on the worker count.
pub(crate) const ROWS_PER_CHUNK: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RenderOptions {
    /// Skip primitives whose 3σ ellipsoid misses the ray.
    pub cull: bool,
}

impl Default for RenderOptions {
    fn default() -> Self {
        Self { cull: true }
    }
}

/// Closest approach of a ray to a Gaussian in the Mahalanobis metric.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RayApproach {
    /// Ray parameter at the minimum.
    pub t: f64,
    /// Squared Mahalanobis distance at the minimum.
    pub d_min: f64,
    /// `dᵀΛd`.
    pub curvature: f64,
}

pub fn ray_approach(precision: &Mat3, mean: &Vec3, origin: &Vec3, dir: &Vec3) -> RayApproach {
    let m = origin - mean;
    let lm = precision * m;
    approach_from(precision, &lm, m.dot(&lm), dir)
}

#[inline]
fn approach_from(precision: &Mat3, lm: &Vec3, mlm: f64, dir: &Vec3) -> RayApproach {
    let ld = precision * dir;
    let c = dir.dot(&ld);
    let b = dir.dot(lm);
    let t = -b / c;
    RayApproach {
        t,
        d_min: (mlm - b * b / c).max(0.0),
        curvature: c,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RayComposite {
    pub color: [f64; 3],
    /// `Σ w_k t_k` in units of the ray parameter.
    pub depth: f64,
    pub weights: Vec<f64>,
}

/// Composites `primitives`, which must be ordered by their ray parameter
/// at the Mahalanobis minimum. `direction` must be unit length.
pub fn composite_ray(primitives: &[GaussianPrimitive], origin: &Vec3, direction: &Vec3) -> Result<RayComposite> {
    if (direction.norm() - 1.0).abs() > 1e-9 {
        return Err(Error::invalid("ray direction must be unit length"));
    }
    let evals: Vec<(f64, f64)> = primitives
        .iter()
        .map(|g| {
            let r = ray_approach(&crate::gsmap::precision(g), &g.mean, origin, direction);
            (r.t, g.opacity * (-0.5 * r.d_min).exp())
        })
        .collect();
    if evals.windows(2).any(|w| w[1].0 < w[0].0) {
        return Err(Error::invalid("primitives are not sorted by depth along the ray"));
    }
    let mut transmittance = 1.0;
    let mut color = [0.0; 3];
    let mut depth = 0.0;
    let mut weights = Vec::with_capacity(evals.len());
    for (g, &(t, a)) in primitives.iter().zip(&evals) {
        let w = a * transmittance;
        for c in 0..3 {
            color[c] += w * g.color[c];
        }
        depth += w * t;
        weights.push(w);
        transmittance *= 1.0 - a;
    }
    Ok(RayComposite { color, depth, weights })
}

/// Rendered color, z-depth, and accumulated weight per pixel.
#[derive(Debug, Clone, PartialEq)]
pub struct RenderedFrame {
    pub width: u32,
    pub height: u32,
    pub color: Vec<[f64; 3]>,
    pub depth: Vec<f64>,
    pub weight: Vec<f64>,
}

/// Per-frame view of one primitive.
#[derive(Debug, Clone, Copy)]
pub(crate) struct FramePrim {
    pub precision: Mat3,
    /// `o − μ` with `o` the camera center.
    pub m: Vec3,
    pub lm: Vec3,
    pub mlm: f64,
    pub opacity: f64,
    pub color: [f64; 3],
}

/// One primitive's contribution along a pixel ray.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Hit {
    pub id: u32,
    pub t: f64,
    pub curvature: f64,
    pub gauss: f64,
    pub alpha: f64,
}

/// Camera-specific ray setup.
pub(crate) struct FrameCamera {
    pub k: CameraIntrinsics,
    pub rot: Mat3,
    pub origin: Vec3,
}

impl FrameCamera {
    pub fn new(k: &CameraIntrinsics, pose: &Pose) -> Self {
        Self {
            k: *k,
            rot: pose.rotation.to_matrix(),
            origin: pose.translation,
        }
    }

    /// Unit world direction through pixel `(u, v)` and the factor turning
    /// a ray parameter into z-depth.
    #[inline]
    pub fn ray(&self, u: u32, v: u32) -> (Vec3, f64) {
        let d_cam = self.k.unproject(u as f64, v as f64);
        let n = d_cam.norm();
        ((self.rot * d_cam) / n, 1.0 / n)
    }
}

/// Candidate primitives per pixel in CSR layout.
pub(crate) struct PixelBins {
    offsets: Vec<usize>,
    ids: Vec<u32>,
}

impl PixelBins {
    #[inline]
    pub fn candidates(&self, pixel: usize) -> &[u32] {
        &self.ids[self.offsets[pixel]..self.offsets[pixel + 1]]
    }
}

/// Inclusive pixel rectangle that may see a primitive's bounding sphere.
fn footprint(cam: &FrameCamera, mean: &Vec3, radius: f64) -> Option<(u32, u32, u32, u32)> {
    let k = &cam.k;
    let pc = cam.rot.transpose() * (mean - cam.origin);
    if pc.z + radius <= NEAR_PLANE {
        return None;
    }
    let (w, h) = (k.width - 1, k.height - 1);
    if pc.z - radius <= NEAR_PLANE {
        return Some((0, w, 0, h));
    }
    // x/z is monotone in x and z over the box, so corners bound it
    let (z0, z1) = (pc.z - radius, pc.z + radius);
    let span = |c: f64, f: f64, cc: f64| {
        let vals = [(c - radius) / z0, (c - radius) / z1, (c + radius) / z0, (c + radius) / z1];
        let lo = vals.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = vals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        (f * lo + cc, f * hi + cc)
    };
    let (u0, u1) = span(pc.x, k.fx, k.cx);
    let (v0, v1) = span(pc.y, k.fy, k.cy);
    if u1 < 0.0 || v1 < 0.0 || u0 > w as f64 || v0 > h as f64 {
        return None;
    }
    let clamp = |x: f64, hi: u32| x.clamp(0.0, hi as f64);
    Some((
        clamp(u0.floor(), w) as u32,
        clamp(u1.ceil(), w) as u32,
        clamp(v0.floor(), h) as u32,
        clamp(v1.ceil(), h) as u32,
    ))
}

pub(crate) fn bin_frame(params: &[SplatParams], cam: &FrameCamera, options: RenderOptions) -> PixelBins {
    let n_pix = cam.k.pixel_count();
    let width = cam.k.width as usize;
    if !options.cull {
        let ids: Vec<u32> = (0..params.len() as u32).collect();
        let mut all = Vec::with_capacity(n_pix * ids.len());
        let mut offsets = Vec::with_capacity(n_pix + 1);
        offsets.push(0);
        for _ in 0..n_pix {
            all.extend_from_slice(&ids);
            offsets.push(all.len());
        }
        return PixelBins { offsets, ids: all };
    }
    let rects: Vec<Option<(u32, u32, u32, u32)>> = params
        .iter()
        .map(|p| footprint(cam, &p.mean, p.bounding_radius()))
        .collect();
    let mut counts = vec![0usize; n_pix + 1];
    for &(u0, u1, v0, v1) in rects.iter().flatten() {
        for v in v0..=v1 {
            let row = v as usize * width;
            for u in u0..=u1 {
                counts[row + u as usize + 1] += 1;
            }
        }
    }
    for i in 1..counts.len() {
        counts[i] += counts[i - 1];
    }
    let offsets = counts;
    let mut fill = offsets.clone();
    let mut ids = vec![0u32; offsets[n_pix]];
    for (id, rect) in rects.iter().enumerate() {
        if let Some(&(u0, u1, v0, v1)) = rect.as_ref() {
            for v in v0..=v1 {
                let row = v as usize * width;
                for u in u0..=u1 {
                    let px = row + u as usize;
                    ids[fill[px]] = id as u32;
                    fill[px] += 1;
                }
            }
        }
    }
    PixelBins { offsets, ids }
}

pub(crate) fn frame_prims(params: &[SplatParams], origin: &Vec3) -> Vec<FramePrim> {
    params
        .iter()
        .map(|p| {
            let precision = p.precision();
            let m = origin - p.mean;
            let lm = precision * m;
            FramePrim {
                precision,
                m,
                lm,
                mlm: m.dot(&lm),
                opacity: p.opacity,
                color: p.color,
            }
        })
        .collect()
}

/// Evaluates the candidates of one pixel and sorts the contributing hits.
pub(crate) fn pixel_hits(prims: &[FramePrim], candidates: &[u32], dir: &Vec3, cull: bool, out: &mut Vec<Hit>) {
    out.clear();
    for &id in candidates {
        let fp = &prims[id as usize];
        let r = approach_from(&fp.precision, &fp.lm, fp.mlm, dir);
        if !(r.t > NEAR_PLANE) || (cull && r.d_min > SUPPORT_MAHALANOBIS_SQ) {
            continue;
        }
        let gauss = (-0.5 * r.d_min).exp();
        out.push(Hit {
            id,
            t: r.t,
            curvature: r.curvature,
            gauss,
            alpha: fp.opacity * gauss,
        });
    }
    out.sort_by(|a, b| a.t.total_cmp(&b.t).then(a.id.cmp(&b.id)));
}

/// Front-to-back composite of sorted hits: (color, ray depth, weight sum).
/// The weight sum is returned as `1 − T` (the telescoped form), which keeps
/// it inside [0, 1] under rounding.
#[inline]
pub(crate) fn composite_hits(prims: &[FramePrim], hits: &[Hit]) -> ([f64; 3], f64, f64) {
    let mut trans = 1.0;
    let mut color = [0.0; 3];
    let mut depth = 0.0;
    for h in hits {
        let w = h.alpha * trans;
        let c = &prims[h.id as usize].color;
        for i in 0..3 {
            color[i] += w * c[i];
        }
        depth += w * h.t;
        trans *= 1.0 - h.alpha;
    }
    (color, depth, 1.0 - trans)
}

pub(crate) fn render_params(params: &[SplatParams], k: &CameraIntrinsics, pose: &Pose, options: RenderOptions) -> RenderedFrame {
    let cam = FrameCamera::new(k, pose);
    let bins = bin_frame(params, &cam, options);
    let prims = frame_prims(params, &cam.origin);
    let (w, h) = (k.width as usize, k.height as usize);
    let rows: Vec<Vec<([f64; 3], f64, f64)>> = (0..h)
        .into_par_iter()
        .map(|v| {
            let mut hits = Vec::new();
            (0..w)
                .map(|u| {
                    let (dir, zfac) = cam.ray(u as u32, v as u32);
                    pixel_hits(&prims, bins.candidates(v * w + u), &dir, options.cull, &mut hits);
                    let (c, d, a) = composite_hits(&prims, &hits);
                    (c, d * zfac, a)
                })
                .collect()
        })
        .collect();
    let mut out = RenderedFrame {
        width: k.width,
        height: k.height,
        color: Vec::with_capacity(w * h),
        depth: Vec::with_capacity(w * h),
        weight: Vec::with_capacity(w * h),
    };
    for (c, d, a) in rows.into_iter().flatten() {
        out.color.push(c);
        out.depth.push(d);
        out.weight.push(a);
    }
    out
}

/// Renders color, z-depth, and accumulated weight for one view. Pixels
/// with no contribution render as zero color and zero depth.
pub fn render_frame(map: &GaussianMap, k: &CameraIntrinsics, pose: &Pose) -> RenderedFrame {
    render_with(map.primitives(), k, pose, RenderOptions::default())
}

pub fn render_with(primitives: &[GaussianPrimitive], k: &CameraIntrinsics, pose: &Pose, options: RenderOptions) -> RenderedFrame {
    let params: Vec<SplatParams> = primitives.iter().map(SplatParams::from_primitive).collect();
    render_params(&params, k, pose, options)
}
