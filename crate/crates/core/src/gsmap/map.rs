use serde::{Deserialize, Serialize};

use super::index::SpatialIndex;
use super::primitive::{mahalanobis_sq, GaussianPrimitive, PrimitiveShape, SUPPORT_MAHALANOBIS_SQ};
use crate::error::{Error, Result};
use crate::geometry::{apply_similarity, SimilarityTransform, Vec3};

/// Running sum of embeddings attached to one primitive.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct FeatureAccumulator {
    pub sum: Vec<f64>,
    pub count: u64,
}

/// Provenance recorded next to a serialized map.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MapProvenance {
    pub source_trajectory: Option<String>,
    pub gamma: Option<f64>,
    pub kappa: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

/// Ordered set of primitives with a spatial index over their 3σ supports.
///
/// Every mutating method leaves the index consistent with the primitives.
#[derive(Debug, Clone, Default)]
pub struct GaussianMap {
    primitives: Vec<GaussianPrimitive>,
    feature_dim: usize,
    shapes: Vec<PrimitiveShape>,
    index: SpatialIndex,
    accum: Vec<Option<FeatureAccumulator>>,
}

impl GaussianMap {
    pub fn new(feature_dim: usize) -> Self {
        Self {
            feature_dim,
            ..Default::default()
        }
    }

    pub fn from_primitives(primitives: Vec<GaussianPrimitive>, feature_dim: usize) -> Result<Self> {
        let mut m = Self::new(feature_dim);
        m.insert_batch(primitives)?;
        Ok(m)
    }

    pub fn len(&self) -> usize {
        self.primitives.len()
    }

    pub fn is_empty(&self) -> bool {
        self.primitives.is_empty()
    }

    pub fn feature_dim(&self) -> usize {
        self.feature_dim
    }

    pub fn primitives(&self) -> &[GaussianPrimitive] {
        &self.primitives
    }

    pub fn shape(&self, i: usize) -> &PrimitiveShape {
        &self.shapes[i]
    }

    pub fn shapes(&self) -> &[PrimitiveShape] {
        &self.shapes
    }

    pub fn index_cell_size(&self) -> f64 {
        self.index.cell_size()
    }

    fn check(&self, g: &GaussianPrimitive) -> Result<()> {
        g.validate()?;
        if let Some(f) = &g.feature {
            if f.len() != self.feature_dim {
                return Err(Error::invalid(format!(
                    "feature of dimension {} in a map of dimension {}",
                    f.len(),
                    self.feature_dim
                )));
            }
        }
        Ok(())
    }

    /// Appends primitives in order. The whole batch is rejected if any
    /// primitive is invalid.
    pub fn insert_batch(&mut self, batch: Vec<GaussianPrimitive>) -> Result<()> {
        if batch.is_empty() {
            return Ok(());
        }
        for g in &batch {
            self.check(g)?;
        }
        if self.primitives.len() + batch.len() > u32::MAX as usize {
            return Err(Error::invalid("map exceeds u32 primitive ids"));
        }
        let first = self.primitives.is_empty();
        let start = self.primitives.len();
        self.shapes.extend(batch.iter().map(PrimitiveShape::of));
        self.accum.extend(batch.iter().map(|_| None));
        self.primitives.extend(batch);
        if first {
            self.rebuild_index();
        } else {
            for i in start..self.primitives.len() {
                self.index.insert(i as u32, &self.primitives[i].mean, &self.shapes[i].half_extent);
            }
        }
        Ok(())
    }

    /// Replaces all primitives; semantic accumulators are reset.
    pub fn set_primitives(&mut self, primitives: Vec<GaussianPrimitive>) -> Result<()> {
        let mut m = Self::new(self.feature_dim);
        m.insert_batch(primitives)?;
        *self = m;
        Ok(())
    }

    /// Replaces primitives one for one, keeping semantic accumulators.
    pub fn set_free_parameters(&mut self, primitives: Vec<GaussianPrimitive>) -> Result<()> {
        if primitives.len() != self.primitives.len() {
            return Err(Error::invalid("primitive count changed"));
        }
        for g in &primitives {
            self.check(g)?;
        }
        self.shapes = primitives.iter().map(PrimitiveShape::of).collect();
        self.primitives = primitives;
        self.rebuild_index();
        Ok(())
    }

    pub fn into_primitives(self) -> Vec<GaussianPrimitive> {
        self.primitives
    }

    fn rebuild_index(&mut self) {
        self.index = SpatialIndex::with_cell_size(SpatialIndex::median_cell_size(self.shapes.iter().map(|s| &s.half_extent)));
        for (i, (g, s)) in self.primitives.iter().zip(&self.shapes).enumerate() {
            self.index.insert(i as u32, &g.mean, &s.half_extent);
        }
    }

    /// Whether `x` lies in the 3σ support of primitive `i`.
    #[inline]
    pub fn supports(&self, i: usize, x: &Vec3) -> bool {
        mahalanobis_sq(&self.shapes[i].precision, &self.primitives[i].mean, x) <= SUPPORT_MAHALANOBIS_SQ
    }

    /// Indices (ascending) of primitives whose 3σ ellipsoid contains `x`.
    pub fn query_neighbors(&self, x: &Vec3) -> Vec<usize> {
        let mut buf = Vec::new();
        let mut out = Vec::new();
        self.query_neighbors_into(x, &mut buf, &mut out);
        out
    }

    /// Allocation-reusing variant of [`Self::query_neighbors`].
    pub fn query_neighbors_into(&self, x: &Vec3, scratch: &mut Vec<u32>, out: &mut Vec<usize>) {
        out.clear();
        self.index.candidates(x, scratch);
        out.extend(scratch.iter().map(|&i| i as usize).filter(|&i| self.supports(i, x)));
    }

    /// Applies `x' = sRx + t`, `σ' = sσ`, `R'_g = R·R_g` to every primitive.
    pub fn transform(&self, t: &SimilarityTransform) -> GaussianMap {
        let primitives: Vec<GaussianPrimitive> = self
            .primitives
            .iter()
            .map(|g| GaussianPrimitive {
                mean: apply_similarity(t, &g.mean),
                scale: g.scale * t.scale,
                rotation: t.rotation.compose(&g.rotation),
                ..g.clone()
            })
            .collect();
        let mut m = GaussianMap {
            shapes: primitives.iter().map(PrimitiveShape::of).collect(),
            primitives,
            feature_dim: self.feature_dim,
            index: SpatialIndex::default(),
            accum: self.accum.clone(),
        };
        m.rebuild_index();
        m
    }

    pub(crate) fn set_feature_dim(&mut self, d: usize) {
        self.feature_dim = d;
    }

    pub(crate) fn accumulators_mut(&mut self) -> (&mut [GaussianPrimitive], &mut [Option<FeatureAccumulator>]) {
        (&mut self.primitives, &mut self.accum)
    }

    /// Drops every feature and accumulated embedding.
    pub fn clear_semantics(&mut self) {
        for g in &mut self.primitives {
            g.feature = None;
        }
        for a in &mut self.accum {
            *a = None;
        }
    }

    pub fn featured_count(&self) -> usize {
        self.primitives.iter().filter(|g| g.feature.is_some()).count()
    }
}

/// Whole-map similarity transform.
pub fn transform_map(map: &GaussianMap, t: &SimilarityTransform) -> GaussianMap {
    map.transform(t)
}

pub fn insert_batch(map: &mut GaussianMap, primitives: Vec<GaussianPrimitive>) -> Result<()> {
    map.insert_batch(primitives)
}

pub fn query_neighbors(map: &GaussianMap, x: &Vec3) -> Vec<usize> {
    map.query_neighbors(x)
}
