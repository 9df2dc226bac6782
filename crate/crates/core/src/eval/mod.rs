//! Occupancy metrics on masked grids and the align-then-score protocol.

use std::fmt::Write;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::align::umeyama_align;
use crate::error::{Error, Result};
use crate::geometry::SimilarityTransform;
use crate::gsmap::{transform_map, GaussianMap};
use crate::occproj::{project, OccupancyField, TextEmbeddingSet, MAX_CLASS_ID, UNKNOWN_LABEL};
use crate::trajectory::{match_trajectories, Trajectory, TIMESTAMP_TOLERANCE};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Counts {
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
}

impl Counts {
    fn add(self, o: Self) -> Self {
        Self {
            tp: self.tp + o.tp,
            fp: self.fp + o.fp,
            fn_: self.fn_ + o.fn_,
        }
    }

    /// `tp / (tp + fp + fn)`, or 1 when both sets are empty.
    pub fn iou(&self) -> f64 {
        let union = self.tp + self.fp + self.fn_;
        if union == 0 {
            1.0
        } else {
            self.tp as f64 / union as f64
        }
    }
}

fn check_specs(pred: &OccupancyField, gt: &OccupancyField) -> Result<()> {
    if pred.spec != gt.spec {
        return Err(Error::invalid("prediction and ground truth use different grids"));
    }
    if pred.occupancy.len() != gt.labels.len() || pred.labels.len() != gt.labels.len() {
        return Err(Error::invalid("field rasters do not match their grid"));
    }
    Ok(())
}

fn count<F>(n: usize, f: F) -> Counts
where
    F: Fn(usize) -> Counts + Sync + Send,
{
    (0..n).into_par_iter().map(f).reduce(Counts::default, Counts::add)
}

pub fn binary_counts(pred: &OccupancyField, gt: &OccupancyField, tau: f64) -> Result<Counts> {
    check_specs(pred, gt)?;
    Ok(count(gt.labels.len(), |i| {
        let g = gt.labels[i];
        if g == UNKNOWN_LABEL {
            return Counts::default();
        }
        let p = pred.occupancy[i] as f64 >= tau;
        let g = (1..=MAX_CLASS_ID as u8).contains(&g);
        Counts {
            tp: (p && g) as u64,
            fp: (p && !g) as u64,
            fn_: (!p && g) as u64,
        }
    }))
}

/// IoU of predicted occupancy (`≥ tau`) against ground-truth class voxels
/// over the known region.
pub fn binary_iou(pred: &OccupancyField, gt: &OccupancyField, tau: f64) -> Result<f64> {
    Ok(binary_counts(pred, gt, tau)?.iou())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassScore {
    pub class_id: u8,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    /// `None` when the class appears in neither field.
    pub iou: Option<f64>,
    pub counts: Counts,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassIou {
    pub per_class: Vec<ClassScore>,
    /// Mean over classes with a defined IoU.
    pub miou: f64,
}

pub fn class_iou(pred: &OccupancyField, gt: &OccupancyField, class_subset: &[u8]) -> Result<ClassIou> {
    check_specs(pred, gt)?;
    let per_class: Vec<ClassScore> = class_subset
        .iter()
        .map(|&c| {
            let counts = count(gt.labels.len(), |i| {
                let g = gt.labels[i];
                if g == UNKNOWN_LABEL {
                    return Counts::default();
                }
                let (p, g) = (pred.labels[i] == c, g == c);
                Counts {
                    tp: (p && g) as u64,
                    fp: (p && !g) as u64,
                    fn_: (!p && g) as u64,
                }
            });
            let present = counts.tp + counts.fp + counts.fn_ > 0;
            ClassScore {
                class_id: c,
                name: None,
                iou: present.then(|| counts.iou()),
                counts,
            }
        })
        .collect();
    let defined: Vec<f64> = per_class.iter().filter_map(|s| s.iou).collect();
    if defined.is_empty() {
        return Err(Error::invalid("no class in the subset occurs in either field"));
    }
    Ok(ClassIou {
        miou: defined.iter().sum::<f64>() / defined.len() as f64,
        per_class,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub iou: f64,
    pub binary_counts: Counts,
    pub per_class: Vec<ClassScore>,
    pub miou: f64,
    pub class_subset: Vec<u8>,
    pub tau_occ: f64,
    pub estimate_scale: bool,
    pub correspondences: usize,
    pub transform: SimilarityTransform,
}

impl EvalReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }

    pub fn to_table(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "{:<16} {:>8} {:>10} {:>10} {:>10}", "class", "IoU", "TP", "FP", "FN");
        let c = &self.binary_counts;
        let _ = writeln!(s, "{:<16} {:>8.4} {:>10} {:>10} {:>10}", "occupied", self.iou, c.tp, c.fp, c.fn_);
        for k in &self.per_class {
            let name = k.name.clone().unwrap_or_else(|| format!("class {}", k.class_id));
            let iou = k.iou.map_or("n/a".to_string(), |v| format!("{v:.4}"));
            let c = &k.counts;
            let _ = writeln!(s, "{:<16} {:>8} {:>10} {:>10} {:>10}", name, iou, c.tp, c.fp, c.fn_);
        }
        let _ = writeln!(s, "{:<16} {:>8.4}", "mIoU", self.miou);
        let t = &self.transform;
        let _ = writeln!(
            s,
            "alignment: scale {:.6}, rotation {:?}, translation {:?}",
            t.scale,
            t.rotation.to_array(),
            t.translation.as_slice()
        );
        s
    }
}

/// Options of [`align_and_evaluate`].
#[derive(Debug, Clone, Default)]
pub struct EvalOptions<'a> {
    /// Sim(3) when set, SE(3) otherwise.
    pub estimate_scale: bool,
    pub texts: Option<&'a TextEmbeddingSet>,
    pub tau_occ: f64,
    /// Defaults to every class id of `texts`.
    pub class_subset: Option<Vec<u8>>,
}

/// Camera-center correspondences between two trajectories.
pub fn correspondences(pred: &Trajectory, gt: &Trajectory) -> Result<Vec<(usize, usize)>> {
    let pairs = match_trajectories(pred, gt);
    let by_time = pairs
        .iter()
        .all(|&(i, j)| (pred.poses[i].timestamp - gt.poses[j].timestamp).abs() <= TIMESTAMP_TOLERANCE);
    if pairs.len() < 3 || (!by_time && pred.len() != gt.len()) {
        return Err(Error::InsufficientCorrespondences {
            required: pred.len().max(gt.len()).max(3),
            got: pairs.len(),
        });
    }
    Ok(pairs)
}

/// Aligns the predicted map to the ground-truth frame through its camera
/// trajectory, projects it onto the ground-truth grid, and scores it.
pub fn align_and_evaluate(
    pred_map: &GaussianMap,
    pred_traj: &Trajectory,
    gt_field: &OccupancyField,
    gt_traj: &Trajectory,
    opts: &EvalOptions<'_>,
) -> Result<EvalReport> {
    gt_field.validate()?;
    let pairs = correspondences(pred_traj, gt_traj)?;
    let pc = pred_traj.centers();
    let gc = gt_traj.centers();
    let src: Vec<_> = pairs.iter().map(|&(i, _)| pc[i]).collect();
    let dst: Vec<_> = pairs.iter().map(|&(_, j)| gc[j]).collect();
    let transform = umeyama_align(&src, &dst, opts.estimate_scale)?;
    let aligned = transform_map(pred_map, &transform);
    let pred = project(&aligned, &gt_field.spec, opts.tau_occ, opts.texts)?.field;
    let counts = binary_counts(&pred, gt_field, opts.tau_occ)?;
    let subset = match (&opts.class_subset, opts.texts) {
        (Some(s), _) => s.clone(),
        (None, Some(t)) => (1..=t.len() as u8).collect(),
        (None, None) => Vec::new(),
    };
    let (per_class, miou) = if subset.is_empty() {
        (Vec::new(), f64::NAN)
    } else {
        let mut c = class_iou(&pred, gt_field, &subset)?;
        if let Some(t) = opts.texts {
            for s in &mut c.per_class {
                s.name = t.categories().get(s.class_id as usize - 1).cloned();
            }
        }
        (c.per_class, c.miou)
    };
    Ok(EvalReport {
        iou: counts.iou(),
        binary_counts: counts,
        per_class,
        miou,
        class_subset: subset,
        tau_occ: opts.tau_occ,
        estimate_scale: opts.estimate_scale,
        correspondences: pairs.len(),
        transform,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Vec3;
    use crate::occproj::GridSpec;

    fn field(labels: &[u8]) -> OccupancyField {
        let spec = GridSpec::new(Vec3::zeros(), [labels.len() as u32, 1, 1], 0.08).unwrap();
        let mut f = OccupancyField::empty(spec);
        f.labels = labels.to_vec();
        f.occupancy = labels.iter().map(|&l| if (1..=254).contains(&l) { 1.0 } else { 0.0 }).collect();
        f
    }

    #[test]
    fn binary_examples() {
        let gt = field(&[1, 1, 0, 0, 255]);
        assert_eq!(binary_iou(&gt, &gt, 0.5).unwrap(), 1.0);
        assert_eq!(binary_iou(&field(&[0, 0, 1, 1, 0]), &gt, 0.5).unwrap(), 0.0);
        assert_eq!(binary_iou(&field(&[1, 1, 1, 1, 0]), &gt, 0.5).unwrap(), 0.5);
        // unknown voxels never count
        assert_eq!(binary_iou(&field(&[1, 1, 0, 0, 1]), &gt, 0.5).unwrap(), 1.0);
        let empty = field(&[0, 0]);
        assert_eq!(binary_iou(&empty, &empty, 0.5).unwrap(), 1.0);
        assert_eq!(binary_iou(&field(&[1, 0]), &empty, 0.5).unwrap(), 0.0);
        assert!(binary_iou(&field(&[0]), &empty, 0.5).is_err());
    }

    #[test]
    fn class_examples() {
        let gt = field(&[1, 1, 0]);
        let r = class_iou(&gt, &gt, &[1]).unwrap();
        assert_eq!((r.per_class[0].iou, r.miou), (Some(1.0), 1.0));
        let r = class_iou(&field(&[0, 0, 0]), &gt, &[1]).unwrap();
        assert_eq!(r.per_class[0].iou, Some(0.0));
        let gt = field(&[1, 2, 2, 0]);
        let r = class_iou(&field(&[1, 2, 0, 2]), &gt, &[1, 2, 3]).unwrap();
        assert!((r.per_class[1].iou.unwrap() - 1.0 / 3.0).abs() < 1e-15);
        let r = class_iou(&field(&[1, 2, 2, 2]), &field(&[1, 2, 0, 0]), &[1, 2, 3]).unwrap();
        assert_eq!(r.per_class[2].iou, None);
        assert_eq!(r.miou, (1.0 + 1.0 / 3.0) / 2.0);
        let r = class_iou(&field(&[1, 2, 2, 0]), &field(&[1, 2, 0, 0]), &[1, 2]).unwrap();
        assert_eq!(r.miou, 0.75);
        assert!(class_iou(&gt, &gt, &[9]).is_err());
    }
}
