use rayon::prelude::*;

use super::grid::{GridSpec, OccupancyField, VoxelFeatures};
use super::ops::{argmax_label, blend_features, compose_unchecked, log_weight, normalize_log_weights, support_from_sq, text_similarity};
use super::text::TextEmbeddingSet;
use crate::error::{Error, Result};
use crate::geometry::Vec3;
use crate::gsmap::{mahalanobis_sq, GaussianMap};

/// Default occupancy threshold for reporting semantics.
pub const DEFAULT_TAU_OCC: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ProjectionStats {
    pub occupied: usize,
    pub labeled: usize,
    /// Occupied voxels left unlabeled because their features cancelled or
    /// no neighbor carried one.
    pub degenerate: usize,
}

#[derive(Debug, Clone)]
pub struct Projection {
    pub field: OccupancyField,
    pub stats: ProjectionStats,
}

struct Voxel {
    occupancy: f32,
    label: u8,
    feature: Option<Vec<f32>>,
    degenerate: bool,
}

/// Evaluates one voxel center given its neighbor ids in ascending order.
fn evaluate(map: &GaussianMap, x: &Vec3, neighbors: &[usize], tau: f64, texts: Option<&TextEmbeddingSet>, logw: &mut Vec<f64>) -> Voxel {
    let prims = map.primitives();
    let m2 = |i: usize| mahalanobis_sq(&map.shape(i).precision, &prims[i].mean, x);
    let occ = compose_unchecked(neighbors.iter().map(|&i| support_from_sq(m2(i)))) as f32;
    let mut v = Voxel {
        occupancy: occ,
        label: 0,
        feature: None,
        degenerate: false,
    };
    let Some(texts) = texts else { return v };
    if (occ as f64) < tau {
        return v;
    }
    let featured: Vec<usize> = neighbors.iter().copied().filter(|&i| prims[i].feature.is_some()).collect();
    logw.clear();
    logw.extend(featured.iter().map(|&i| log_weight(prims[i].opacity, m2(i), map.shape(i).log_det)));
    let feature = normalize_log_weights(logw).and_then(|_| {
        blend_features(
            featured.iter().zip(logw.iter()).map(|(&i, &r)| (r, prims[i].feature.as_deref().unwrap_or(&[]))),
            map.feature_dim(),
        )
    });
    match feature {
        Ok(f) => {
            let sims = text_similarity(&f, texts).expect("dimensions checked before projection");
            v.label = argmax_label(&sims).unwrap_or(0);
            v.feature = Some(f);
        }
        Err(_) => v.degenerate = true,
    }
    v
}

fn assemble(spec: GridSpec, voxels: Vec<Voxel>, tau: f64, with_features: Option<usize>) -> Projection {
    let mut field = OccupancyField::empty(spec);
    let mut stats = ProjectionStats::default();
    let mut features = with_features.map(|dim| VoxelFeatures { dim, ..Default::default() });
    for (idx, v) in voxels.into_iter().enumerate() {
        field.occupancy[idx] = v.occupancy;
        field.labels[idx] = v.label;
        if v.occupancy as f64 >= tau {
            stats.occupied += 1;
        }
        if v.label > 0 {
            stats.labeled += 1;
        }
        if v.degenerate {
            stats.degenerate += 1;
        }
        if let (Some(fs), Some(f)) = (features.as_mut(), v.feature) {
            fs.entries.insert(idx as u64, f);
        }
    }
    field.features = features;
    if stats.degenerate > 0 {
        log::warn!("{} occupied voxels have no usable feature and stay unlabeled", stats.degenerate);
    }
    Projection { field, stats }
}

fn check_inputs(map: &GaussianMap, spec: &GridSpec, tau: f64, texts: Option<&TextEmbeddingSet>) -> Result<()> {
    spec.validate()?;
    if !(0.0..=1.0).contains(&tau) {
        return Err(Error::invalid(format!("occupancy threshold {tau} outside [0, 1]")));
    }
    if let Some(t) = texts {
        if map.featured_count() == 0 && !map.is_empty() {
            return Err(Error::invalid("text queries need a map with language features"));
        }
        if !map.is_empty() && map.feature_dim() != t.dim() {
            return Err(Error::invalid(format!(
                "map features have dimension {}, text embeddings {}",
                map.feature_dim(),
                t.dim()
            )));
        }
    }
    Ok(())
}

/// Projects the map onto a voxel grid. Each voxel is evaluated at its
/// center from the primitives whose 3σ support contains it.
pub fn project(map: &GaussianMap, spec: &GridSpec, tau: f64, texts: Option<&TextEmbeddingSet>) -> Result<Projection> {
    check_inputs(map, spec, tau, texts)?;
    let voxels: Vec<Voxel> = (0..spec.len())
        .into_par_iter()
        .map_init(
            || (Vec::new(), Vec::new(), Vec::new()),
            |(scratch, neighbors, logw), idx| {
                let x = spec.center_of(idx);
                map.query_neighbors_into(&x, scratch, neighbors);
                evaluate(map, &x, neighbors, tau, texts, logw)
            },
        )
        .collect();
    Ok(assemble(*spec, voxels, tau, texts.map(|t| t.dim())))
}
