//! Category names with unit text embeddings.
//!
//! On disk: a JSON manifest `{"categories": [...], "dim": D, "matrix": "<file>"}`
//! whose `matrix` names a raw little-endian `C×D` f32 file, resolved
//! relative to the manifest.

use std::collections::HashSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::grid::MAX_CLASS_ID;
use crate::error::{Error, Result};
use crate::gsmap::feature_norm;

const UNIT_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct TextEmbeddingSet {
    categories: Vec<String>,
    dim: usize,
    data: Vec<f32>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Manifest {
    categories: Vec<String>,
    dim: usize,
    matrix: String,
}

impl TextEmbeddingSet {
    /// Rows must already be unit-norm.
    pub fn new(categories: Vec<String>, rows: Vec<Vec<f32>>) -> Result<Self> {
        if categories.is_empty() || categories.len() != rows.len() {
            return Err(Error::invalid("need one embedding per category and at least one category"));
        }
        if categories.len() > MAX_CLASS_ID {
            return Err(Error::invalid(format!("at most {MAX_CLASS_ID} categories are supported")));
        }
        let mut seen = HashSet::new();
        for c in &categories {
            if !seen.insert(c.as_str()) {
                return Err(Error::invalid(format!("duplicate category name {c:?}")));
            }
        }
        let dim = rows[0].len();
        if dim == 0 {
            return Err(Error::invalid("embedding dimension must be positive"));
        }
        for (c, r) in categories.iter().zip(&rows) {
            if r.len() != dim {
                return Err(Error::invalid(format!("embedding for {c:?} has dimension {}", r.len())));
            }
            let n = feature_norm(r);
            if (n - 1.0).abs() > UNIT_TOLERANCE {
                return Err(Error::invalid(format!("embedding for {c:?} has norm {n}")));
            }
        }
        Ok(Self {
            categories,
            dim,
            data: rows.concat(),
        })
    }

    /// Normalizes each row before validation.
    pub fn normalized(categories: Vec<String>, rows: Vec<Vec<f32>>) -> Result<Self> {
        let rows = rows
            .into_iter()
            .map(|r| {
                let n = feature_norm(&r);
                if !(n > 0.0) {
                    return Err(Error::invalid("zero text embedding"));
                }
                Ok(r.iter().map(|&v| (v as f64 / n) as f32).collect())
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(categories, rows)
    }

    pub fn len(&self) -> usize {
        self.categories.len()
    }

    pub fn is_empty(&self) -> bool {
        self.categories.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn categories(&self) -> &[String] {
        &self.categories
    }

    pub fn row(&self, c: usize) -> &[f32] {
        &self.data[c * self.dim..(c + 1) * self.dim]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f32]> {
        self.data.chunks_exact(self.dim)
    }

    /// 1-based class id of a category name.
    pub fn class_id(&self, name: &str) -> Option<u8> {
        self.categories.iter().position(|c| c == name).map(|i| (i + 1) as u8)
    }

    pub fn load(manifest: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(manifest).map_err(|e| Error::io(manifest, e))?;
        let m: Manifest = serde_json::from_str(&text).map_err(|e| Error::format(manifest, e.to_string()))?;
        let path = manifest.parent().unwrap_or(Path::new(".")).join(&m.matrix);
        let bytes = std::fs::read(&path).map_err(|e| Error::io(&path, e))?;
        let expected = m.categories.len() * m.dim * 4;
        if bytes.len() != expected {
            return Err(Error::format(&path, format!("expected {expected} bytes, found {}", bytes.len())));
        }
        let values: Vec<f32> = bytes
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
            .collect();
        let rows = if m.dim == 0 { Vec::new() } else { values.chunks(m.dim).map(<[f32]>::to_vec).collect() };
        Self::new(m.categories, rows).map_err(|e| Error::format(manifest, e.to_string()))
    }

    /// Writes the manifest and a sibling `<stem>.f32` matrix.
    pub fn save(&self, manifest: &Path) -> Result<()> {
        let stem = manifest.file_stem().and_then(|s| s.to_str()).unwrap_or("texts");
        let matrix = format!("{stem}.f32");
        let m = Manifest {
            categories: self.categories.clone(),
            dim: self.dim,
            matrix: matrix.clone(),
        };
        let json = serde_json::to_string_pretty(&m).map_err(|e| Error::format(manifest, e.to_string()))?;
        std::fs::write(manifest, json).map_err(|e| Error::io(manifest, e))?;
        let path = manifest.parent().unwrap_or(Path::new(".")).join(matrix);
        let bytes: Vec<u8> = self.data.iter().flat_map(|v| v.to_le_bytes()).collect();
        std::fs::write(&path, bytes).map_err(|e| Error::io(&path, e))
    }
}
