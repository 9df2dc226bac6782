use super::text::TextEmbeddingSet;
use crate::error::{Error, Result};
use crate::geometry::Vec3;
use crate::gsmap::{mahalanobis_sq, GaussianPrimitive, PrimitiveShape};

/// Aggregate feature norms below this are treated as cancelled out.
pub const FEATURE_NORM_FLOOR: f64 = 1e-9;

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// `exp(−½ (x−μ)ᵀ (Σ+εI)⁻¹ (x−μ))`.
pub fn spatial_support(g: &GaussianPrimitive, x: &Vec3) -> f64 {
    support_from_sq(mahalanobis_sq(&crate::gsmap::precision(g), &g.mean, x))
}

#[inline]
pub(crate) fn support_from_sq(m2: f64) -> f64 {
    (-0.5 * m2).exp()
}

/// `1 − Π (1 − α_k)`, folded in the given order.
pub fn compose_occupancy(alphas: &[f64]) -> Result<f64> {
    if let Some(a) = alphas.iter().find(|a| !(0.0..=1.0).contains(*a)) {
        return Err(Error::invalid(format!("support {a} outside [0, 1]")));
    }
    Ok(compose_unchecked(alphas.iter().copied()))
}

#[inline]
pub(crate) fn compose_unchecked(alphas: impl Iterator<Item = f64>) -> f64 {
    // o ← o + a·(1 − o) equals 1 − Π(1 − a) and returns a single support unchanged
    alphas.fold(0.0, |o, a| o + a * (1.0 - o))
}

/// Log of `o·𝒩(x; μ, Σ)` with the full normalization constant.
#[inline]
pub(crate) fn log_weight(opacity: f64, m2: f64, log_det: f64) -> f64 {
    opacity.ln() - 0.5 * (m2 + log_det + 3.0 * LN_2PI)
}

/// Normalizes log weights into responsibilities.
pub(crate) fn normalize_log_weights(logw: &mut [f64]) -> Result<()> {
    let max = logw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return Err(Error::DegenerateMixture);
    }
    let mut sum = 0.0;
    for l in logw.iter_mut() {
        *l = (*l - max).exp();
        sum += *l;
    }
    for l in logw.iter_mut() {
        *l /= sum;
    }
    Ok(())
}

/// Posterior responsibilities of a local mixture with opacity priors.
pub fn responsibilities(neighbors: &[GaussianPrimitive], x: &Vec3) -> Result<Vec<f64>> {
    if neighbors.is_empty() {
        return Err(Error::invalid("responsibilities need at least one neighbor"));
    }
    let mut logw: Vec<f64> = neighbors
        .iter()
        .map(|g| {
            let s = PrimitiveShape::of(g);
            log_weight(g.opacity, mahalanobis_sq(&s.precision, &g.mean, x), s.log_det)
        })
        .collect();
    normalize_log_weights(&mut logw)?;
    Ok(logw)
}

/// `Σ r_k f_k` normalized to unit length.
pub(crate) fn blend_features<'a>(weighted: impl Iterator<Item = (f64, &'a [f32])>, dim: usize) -> Result<Vec<f32>> {
    let mut acc = vec![0.0f64; dim];
    for (r, f) in weighted {
        if f.len() != dim {
            return Err(Error::invalid("feature dimensions differ among neighbors"));
        }
        for (a, &v) in acc.iter_mut().zip(f) {
            *a += r * v as f64;
        }
    }
    let norm = acc.iter().map(|v| v * v).sum::<f64>().sqrt();
    if !(norm >= FEATURE_NORM_FLOOR) {
        return Err(Error::DegenerateFeature { norm });
    }
    Ok(acc.iter().map(|v| (v / norm) as f32).collect())
}

/// Posterior-expected feature at `x`, normalized.
pub fn expected_feature(neighbors: &[GaussianPrimitive], x: &Vec3) -> Result<Vec<f32>> {
    let resp = responsibilities(neighbors, x)?;
    let mut dim = None;
    for (g, &r) in neighbors.iter().zip(&resp) {
        match (&g.feature, r > 0.0) {
            (Some(f), _) => dim = dim.or(Some(f.len())),
            (None, true) => return Err(Error::invalid("a contributing neighbor has no feature")),
            (None, false) => {}
        }
    }
    let dim = dim.ok_or_else(|| Error::invalid("no neighbor carries a feature"))?;
    blend_features(
        neighbors
            .iter()
            .zip(&resp)
            .filter_map(|(g, &r)| g.feature.as_deref().map(|f| (r, f))),
        dim,
    )
}

/// Cosine similarity of a unit voxel feature to every category.
pub fn text_similarity(feature: &[f32], texts: &TextEmbeddingSet) -> Result<Vec<f64>> {
    if feature.len() != texts.dim() {
        return Err(Error::invalid(format!(
            "feature dimension {} does not match text dimension {}",
            feature.len(),
            texts.dim()
        )));
    }
    Ok(texts
        .rows()
        .map(|t| t.iter().zip(feature).map(|(&a, &b)| a as f64 * b as f64).sum())
        .collect())
}

/// 1-based index of the largest similarity; ties go to the lowest index.
pub fn argmax_label(similarities: &[f64]) -> Option<u8> {
    let mut best: Option<(usize, f64)> = None;
    for (i, &s) in similarities.iter().enumerate() {
        if best.is_none_or(|(_, b)| s > b) {
            best = Some((i, s));
        }
    }
    best.map(|(i, _)| (i + 1) as u8)
}
