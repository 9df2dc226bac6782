use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::grad::{params_loss, params_loss_gradient, PrimitiveGradient};
use super::loss::TrainingFrame;
use super::params::SplatParams;
use super::render::RenderOptions;
use crate::error::{Error, Result};
use crate::gsmap::GaussianMap;

/// Step halvings tried per iteration before giving up.
pub const MAX_HALVINGS: u32 = 20;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizerConfig {
    /// Weight of the depth term.
    pub beta: f64,
    pub lr_scale: f64,
    pub lr_rotation: f64,
    pub lr_opacity: f64,
    pub lr_color: f64,
    pub max_iters: usize,
    /// Stop once an accepted step lowers the loss by less than this
    /// fraction.
    pub tol: f64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            beta: 1.0,
            lr_scale: 1e-3,
            lr_rotation: 1e-2,
            lr_opacity: 5e-2,
            lr_color: 5e-2,
            max_iters: 100,
            tol: 1e-6,
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.beta >= 0.0 && self.beta.is_finite()) {
            return Err(Error::invalid(format!("beta {} must be non-negative", self.beta)));
        }
        for (name, v) in [
            ("lr_scale", self.lr_scale),
            ("lr_rotation", self.lr_rotation),
            ("lr_opacity", self.lr_opacity),
            ("lr_color", self.lr_color),
            ("tol", self.tol),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::invalid(format!("{name} = {v} must be finite and non-negative")));
            }
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let c: Self = serde_json::from_str(&text).map_err(|e| Error::format(path, e.to_string()))?;
        c.validate()?;
        Ok(c)
    }
}

#[derive(Debug, Clone)]
pub struct OptimizeOutcome {
    pub map: GaussianMap,
    /// Loss before the first step followed by the loss after each
    /// accepted step.
    pub trace: Vec<f64>,
    pub converged: bool,
}

fn step(params: &[SplatParams], grads: &[PrimitiveGradient], cfg: &OptimizerConfig, eta: f64) -> Vec<SplatParams> {
    params
        .iter()
        .zip(grads)
        .map(|(p, g)| {
            let mut q = *p;
            q.scale -= g.scale * (eta * cfg.lr_scale);
            for i in 0..4 {
                q.rotation[i] -= eta * cfg.lr_rotation * g.rotation[i];
            }
            q.opacity -= eta * cfg.lr_opacity * g.opacity;
            for i in 0..3 {
                q.color[i] -= eta * cfg.lr_color * g.color[i];
            }
            q.project();
            q
        })
        .collect()
}

/// Largest scaled update component, used to size the first step.
fn max_update(grads: &[PrimitiveGradient], cfg: &OptimizerConfig) -> f64 {
    grads.iter().fold(0.0f64, |m, g| {
        let mut m = m;
        m = g.scale.iter().fold(m, |a, v| a.max((v * cfg.lr_scale).abs()));
        m = g.rotation.iter().fold(m, |a, v| a.max((v * cfg.lr_rotation).abs()));
        m = m.max((g.opacity * cfg.lr_opacity).abs());
        g.color.iter().fold(m, |a, v| a.max((v * cfg.lr_color).abs()))
    })
}

fn finite(loss: f64, iteration: usize) -> Result<f64> {
    if loss.is_finite() {
        Ok(loss)
    } else {
        Err(Error::NumericalFailure {
            iteration,
            reason: format!("loss evaluated to {loss}"),
        })
    }
}

/// Gradient descent on scale, rotation, opacity, and color with means held
/// fixed. Each step is halved until the loss does not increase.
pub fn optimize_anchored(map: &GaussianMap, frames: &[TrainingFrame], cfg: &OptimizerConfig) -> Result<OptimizeOutcome> {
    cfg.validate()?;
    if frames.is_empty() {
        return Err(Error::invalid("optimization needs at least one frame"));
    }
    let opts = RenderOptions::default();
    let mut params: Vec<SplatParams> = map.primitives().iter().map(SplatParams::from_primitive).collect();
    let (mut loss, mut grads) = params_loss_gradient(&params, frames, cfg.beta, opts)?;
    finite(loss, 0)?;
    let mut trace = vec![loss];
    let mut converged = false;
    let mut eta = 1.0 / max_update(&grads, cfg).max(1.0);
    for it in 1..=cfg.max_iters {
        if grads.iter().all(PrimitiveGradient::is_zero) {
            converged = true;
            break;
        }
        let mut accepted = None;
        for _ in 0..=MAX_HALVINGS {
            let trial = step(&params, &grads, cfg, eta);
            let l = finite(params_loss(&trial, frames, cfg.beta, opts)?, it)?;
            if l <= loss {
                accepted = Some((trial, l));
                break;
            }
            eta *= 0.5;
        }
        let Some((next, l)) = accepted else {
            converged = true;
            break;
        };
        let rel = (loss - l) / loss.max(f64::MIN_POSITIVE);
        log::debug!("iteration {it}: loss {l:.6e}, step {eta:.3e}");
        params = next;
        trace.push(l);
        if rel < cfg.tol {
            converged = true;
            break;
        }
        eta *= 2.0;
        let (l2, g2) = params_loss_gradient(&params, frames, cfg.beta, opts)?;
        loss = finite(l2, it)?;
        grads = g2;
    }
    let mut prims = map.primitives().to_vec();
    for (g, p) in prims.iter_mut().zip(&params) {
        p.store(g);
    }
    let mut out = map.clone();
    out.set_free_parameters(prims)?;
    Ok(OptimizeOutcome { map: out, trace, converged })
}

pub fn write_loss_trace(path: &Path, trace: &[f64]) -> Result<()> {
    let mut s = String::from("iter,loss\n");
    for (i, l) in trace.iter().enumerate() {
        s.push_str(&format!("{i},{l}\n"));
    }
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(s.as_bytes()).map_err(|e| Error::io(path, e))
}
