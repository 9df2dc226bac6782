//! Analytic gradient of the rendering loss with respect to the free
//! parameters (scale, rotation, opacity, color). Means are anchored.
//!
//! Per pixel the loss is differentiated through the compositing recursion
//! back to front; per hit the opacity `a = o·exp(−½ d_min)` and the depth
//! `t*` depend on the precision `Λ`, with
//! `∂d_min/∂Λ = p pᵀ` and `∂t*/∂Λ = −sym(d pᵀ)/(dᵀΛd)` where `p = m + t* d`.
//! `Λ = R·D·Rᵀ` is then pulled back to the scales and the quaternion.

use rayon::prelude::*;

use super::loss::{pixel_loss, TrainingFrame};
use super::params::SplatParams;
use super::render::{bin_frame, frame_prims, pixel_hits, FrameCamera, FramePrim, Hit, RenderOptions, ROWS_PER_CHUNK};
use crate::error::{Error, Result};
use crate::geometry::{Mat3, Vec3};
use crate::gsmap::GaussianMap;

/// Gradient of the loss for one primitive.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PrimitiveGradient {
    /// Always zero: means are fixed to their back-projected anchors.
    pub mean: Vec3,
    pub scale: Vec3,
    /// With respect to the raw `(w, x, y, z)` quaternion.
    pub rotation: [f64; 4],
    pub opacity: f64,
    pub color: [f64; 3],
}

impl PrimitiveGradient {
    pub fn is_zero(&self) -> bool {
        self.scale == Vec3::zeros() && self.rotation == [0.0; 4] && self.opacity == 0.0 && self.color == [0.0; 3]
    }
}

#[derive(Debug, Clone, Copy, Default)]
struct Contrib {
    lambda: Mat3,
    opacity: f64,
    color: [f64; 3],
}

fn check_frames(params: &[SplatParams], frames: &[TrainingFrame], beta: f64) -> Result<()> {
    if !(beta >= 0.0) {
        return Err(Error::invalid(format!("beta {beta} must be non-negative")));
    }
    if params.len() > u32::MAX as usize {
        return Err(Error::invalid("too many primitives"));
    }
    for f in frames {
        f.validate()?;
    }
    Ok(())
}

/// Backward pass through one pixel. Pushes per-hit contributions and
/// returns the pixel loss.
#[allow(clippy::too_many_arguments)]
fn pixel_backward(
    prims: &[FramePrim],
    hits: &[Hit],
    dir: &Vec3,
    zfac: f64,
    observed: [f64; 3],
    depth: f64,
    beta: f64,
    trans: &mut Vec<f64>,
    out: &mut Vec<(u32, Contrib)>,
) -> f64 {
    trans.clear();
    let mut t_acc = 1.0;
    let mut color = [0.0; 3];
    let mut dz = 0.0;
    for h in hits {
        trans.push(t_acc);
        let w = h.alpha * t_acc;
        let c = &prims[h.id as usize].color;
        for i in 0..3 {
            color[i] += w * c[i];
        }
        dz += w * h.t;
        t_acc *= 1.0 - h.alpha;
    }
    let dz = dz * zfac;
    let loss = pixel_loss(color, dz, observed, depth, beta);
    let gc = [0, 1, 2].map(|i| 2.0 * (color[i] - observed[i]));
    let gd = if depth > 0.0 && depth.is_finite() { 2.0 * beta * (dz - depth) } else { 0.0 };
    if gc == [0.0; 3] && gd == 0.0 {
        return loss;
    }
    let mut back_c = [0.0; 3];
    let mut back_z = 0.0;
    for (k, h) in hits.iter().enumerate().rev() {
        let fp = &prims[h.id as usize];
        let a = h.alpha;
        let tk = trans[k];
        let z = h.t * zfac;
        let mut d_a = gd * (z - back_z);
        for i in 0..3 {
            d_a += gc[i] * (fp.color[i] - back_c[i]);
        }
        d_a *= tk;
        for i in 0..3 {
            back_c[i] = a * fp.color[i] + (1.0 - a) * back_c[i];
        }
        back_z = a * z + (1.0 - a) * back_z;
        let w = a * tk;
        let d_t = w * gd * zfac;
        let d_dmin = -0.5 * a * d_a;
        let p = fp.m + dir * h.t;
        let dp = dir * p.transpose();
        let lambda = p * p.transpose() * d_dmin - (dp + dp.transpose()) * (0.5 * d_t / h.curvature);
        out.push((
            h.id,
            Contrib {
                lambda,
                opacity: d_a * h.gauss,
                color: gc.map(|g| w * g),
            },
        ));
    }
    loss
}

/// Loss and, if requested, per-primitive accumulators for one frame.
fn frame_pass(
    params: &[SplatParams],
    frame: &TrainingFrame,
    beta: f64,
    options: RenderOptions,
    acc: Option<&mut [Contrib]>,
) -> f64 {
    let k = &frame.intrinsics;
    let cam = FrameCamera::new(k, &frame.pose);
    let bins = bin_frame(params, &cam, options);
    let prims = frame_prims(params, &cam.origin);
    let (w, h) = (k.width as usize, k.height as usize);
    let want_grad = acc.is_some();
    let chunks: Vec<(f64, Vec<(u32, Contrib)>)> = (0..h.div_ceil(ROWS_PER_CHUNK))
        .into_par_iter()
        .map(|chunk| {
            let mut hits = Vec::new();
            let mut trans = Vec::new();
            let mut out = Vec::new();
            let mut loss = 0.0;
            let v_end = ((chunk + 1) * ROWS_PER_CHUNK).min(h);
            for v in chunk * ROWS_PER_CHUNK..v_end {
                for u in 0..w {
                    let px = v * w + u;
                    let (dir, zfac) = cam.ray(u as u32, v as u32);
                    pixel_hits(&prims, bins.candidates(px), &dir, options.cull, &mut hits);
                    let obs = frame.image.data[px];
                    let depth = frame.depth.depth[px];
                    loss += if want_grad {
                        pixel_backward(&prims, &hits, &dir, zfac, obs, depth, beta, &mut trans, &mut out)
                    } else {
                        let (c, d, _) = super::render::composite_hits(&prims, &hits);
                        pixel_loss(c, d * zfac, obs, depth, beta)
                    };
                }
            }
            (loss, out)
        })
        .collect();
    let mut loss = 0.0;
    match acc {
        Some(acc) => {
            for (l, contribs) in chunks {
                loss += l;
                for (id, c) in contribs {
                    let a = &mut acc[id as usize];
                    a.lambda += c.lambda;
                    a.opacity += c.opacity;
                    for i in 0..3 {
                        a.color[i] += c.color[i];
                    }
                }
            }
        }
        None => loss = chunks.iter().map(|c| c.0).sum(),
    }
    loss
}

/// Pulls a gradient with respect to `Λ` back to scale and raw quaternion.
fn pull_back(p: &SplatParams, g: &Mat3) -> (Vec3, [f64; 4]) {
    let r = p.rotation_matrix();
    let dinv = p.inverse_variances();
    let gr = g * r;
    let d_r = gr * Mat3::from_diagonal(&dinv) * 2.0;
    let rgr = r.transpose() * gr;
    let scale = Vec3::from_fn(|i, _| {
        let s = p.scale[i];
        rgr[(i, i)] * (-2.0 * s * dinv[i] * dinv[i])
    });
    let q = p.unit_rotation();
    let [w, x, y, z] = q;
    let m = |i: usize, j: usize| d_r[(i, j)];
    let dq = [
        2.0 * (-z * m(0, 1) + y * m(0, 2) + z * m(1, 0) - x * m(1, 2) - y * m(2, 0) + x * m(2, 1)),
        2.0 * (y * m(0, 1) + z * m(0, 2) + y * m(1, 0) - 2.0 * x * m(1, 1) - w * m(1, 2) + z * m(2, 0) + w * m(2, 1)
            - 2.0 * x * m(2, 2)),
        2.0 * (-2.0 * y * m(0, 0) + x * m(0, 1) + w * m(0, 2) + x * m(1, 0) + z * m(1, 2) - w * m(2, 0) + z * m(2, 1)
            - 2.0 * y * m(2, 2)),
        2.0 * (-2.0 * z * m(0, 0) - w * m(0, 1) + x * m(0, 2) + w * m(1, 0) - 2.0 * z * m(1, 1) + y * m(1, 2)
            + x * m(2, 0)
            + y * m(2, 1)),
    ];
    let radial: f64 = (0..4).map(|i| q[i] * dq[i]).sum();
    let n = p.quat_norm();
    (scale, [0, 1, 2, 3].map(|i| (dq[i] - q[i] * radial) / n))
}

/// Total loss over `frames` for raw parameters.
pub fn params_loss(params: &[SplatParams], frames: &[TrainingFrame], beta: f64, options: RenderOptions) -> Result<f64> {
    check_frames(params, frames, beta)?;
    Ok(frames.iter().map(|f| frame_pass(params, f, beta, options, None)).sum())
}

/// Total loss and its gradient for raw parameters.
pub fn params_loss_gradient(
    params: &[SplatParams],
    frames: &[TrainingFrame],
    beta: f64,
    options: RenderOptions,
) -> Result<(f64, Vec<PrimitiveGradient>)> {
    check_frames(params, frames, beta)?;
    let mut acc = vec![Contrib::default(); params.len()];
    let mut loss = 0.0;
    for f in frames {
        loss += frame_pass(params, f, beta, options, Some(&mut acc));
    }
    let grads = params
        .iter()
        .zip(&acc)
        .map(|(p, a)| {
            let (scale, rotation) = if a.lambda == Mat3::zeros() {
                (Vec3::zeros(), [0.0; 4])
            } else {
                pull_back(p, &a.lambda)
            };
            PrimitiveGradient {
                mean: Vec3::zeros(),
                scale,
                rotation,
                opacity: a.opacity,
                color: a.color,
            }
        })
        .collect();
    Ok((loss, grads))
}

/// Loss over all frames and its gradient for every primitive of `map`.
pub fn loss_gradient(map: &GaussianMap, frames: &[TrainingFrame], beta: f64) -> Result<(f64, Vec<PrimitiveGradient>)> {
    let params: Vec<SplatParams> = map.primitives().iter().map(SplatParams::from_primitive).collect();
    params_loss_gradient(&params, frames, beta, RenderOptions::default())
}
