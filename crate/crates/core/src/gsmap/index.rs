//! Uniform hash grid over the axis-aligned boxes of primitive support
//! regions. A primitive is registered in every cell its box overlaps, so a
//! point query only inspects the single cell containing the point.

use rustc_hash::FxHashMap;

use crate::geometry::Vec3;

/// Primitives whose box covers more cells than this are kept in a flat list
/// that every query scans.
const MAX_CELLS_PER_PRIMITIVE: i64 = 4096;

type CellKey = [i64; 3];

#[derive(Debug, Clone, Default)]
pub struct SpatialIndex {
    cell_size: f64,
    cells: FxHashMap<CellKey, Vec<u32>>,
    oversized: Vec<u32>,
}

impl SpatialIndex {
    pub fn with_cell_size(cell_size: f64) -> Self {
        Self {
            cell_size: if cell_size.is_finite() && cell_size > 0.0 { cell_size } else { 1.0 },
            cells: FxHashMap::default(),
            oversized: Vec::new(),
        }
    }

    /// Cell size from the median full width of the given support boxes.
    pub fn median_cell_size<'a>(half_extents: impl Iterator<Item = &'a Vec3>) -> f64 {
        let mut widths: Vec<f64> = half_extents.map(|h| 2.0 * h.max()).collect();
        if widths.is_empty() {
            return 1.0;
        }
        let mid = widths.len() / 2;
        let (_, m, _) = widths.select_nth_unstable_by(mid, f64::total_cmp);
        m.max(1e-6)
    }

    pub fn cell_size(&self) -> f64 {
        self.cell_size
    }

    #[inline]
    fn key(&self, p: &Vec3) -> CellKey {
        let inv = 1.0 / self.cell_size;
        [
            (p.x * inv).floor() as i64,
            (p.y * inv).floor() as i64,
            (p.z * inv).floor() as i64,
        ]
    }

    pub fn insert(&mut self, id: u32, center: &Vec3, half_extent: &Vec3) {
        let lo = self.key(&(center - half_extent));
        let hi = self.key(&(center + half_extent));
        let count = (0..3).map(|a| (hi[a] - lo[a] + 1).max(1)).product::<i64>();
        if !(1..=MAX_CELLS_PER_PRIMITIVE).contains(&count) {
            self.oversized.push(id);
            return;
        }
        for i in lo[0]..=hi[0] {
            for j in lo[1]..=hi[1] {
                for k in lo[2]..=hi[2] {
                    self.cells.entry([i, j, k]).or_default().push(id);
                }
            }
        }
    }

    /// Candidate ids whose box may contain `p`, in ascending order.
    pub fn candidates(&self, p: &Vec3, out: &mut Vec<u32>) {
        out.clear();
        if let Some(ids) = self.cells.get(&self.key(p)) {
            out.extend_from_slice(ids);
        }
        if !self.oversized.is_empty() {
            out.extend_from_slice(&self.oversized);
            out.sort_unstable();
        }
    }

    pub fn clear(&mut self) {
        self.cells.clear();
        self.oversized.clear();
    }
}
