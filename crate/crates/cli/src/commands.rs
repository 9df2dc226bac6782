use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use freeocc::bench::synth::{generate_scene, write_dataset, SceneSpec};
use freeocc::bench::{assemble_benchmark, densify_grid, extract_sparse_voxels, observability_mask, DatasetManifest, LabeledFrameSet};
use freeocc::eval::{align_and_evaluate, EvalOptions};
use freeocc::geometry::Vec3;
use freeocc::gsmap::io::{load_map, load_provenance, save_map};
use freeocc::gsmap::{init_map as init_gaussians, MapProvenance};
use freeocc::occproj::{load_field, project as project_map, save_field, text_similarity, GridSpec, TextEmbeddingSet};
use freeocc::pipeline::{associate_frames, training_frames};
use freeocc::splatopt::{optimize_anchored, write_loss_trace};
use freeocc::trajectory::Trajectory;
use freeocc::{Error, Result};
use log::info;

use crate::config::PipelineConfig;

fn io_err(path: &Path, e: std::io::Error) -> Error {
    Error::Io {
        path: path.into(),
        source: e,
    }
}

fn load_frames(manifest: &Path, cfg: &PipelineConfig, with_embeddings: bool) -> Result<(DatasetManifest, LabeledFrameSet)> {
    let mut m = DatasetManifest::load(manifest)?;
    if let Some(r) = cfg.max_range {
        m.max_range = r;
    }
    let set = m.load_frames(manifest, with_embeddings)?;
    Ok((m, set))
}

fn provenance_or_default(map: &Path) -> MapProvenance {
    load_provenance(map).unwrap_or_default()
}

pub fn synth(scene: &Path, out: &Path, cfg: &PipelineConfig) -> Result<()> {
    let mut spec = SceneSpec::load(scene)?;
    if let Some(s) = cfg.seed {
        spec.seed = s;
    }
    if let Some(d) = cfg.feature_dim {
        spec.feature_dim = d;
    }
    spec.voxel_size = cfg.voxel_size;
    let generated = generate_scene(&spec)?;
    write_dataset(out, &generated)?;
    println!(
        "frames: {}  ground-truth voxels: {}",
        generated.frames.frames.len(),
        generated.ground_truth.labels.iter().filter(|&&l| (1..=254).contains(&l)).count()
    );
    Ok(())
}

pub fn init_map(manifest: &Path, out: &Path, cfg: &PipelineConfig) -> Result<()> {
    let (m, set) = load_frames(manifest, cfg, false)?;
    let map = init_gaussians(&set.init_views(), cfg.pixel_stride, &cfg.init_params())?;
    let prov = MapProvenance {
        source_trajectory: Some(m.trajectory.clone()),
        gamma: Some(cfg.gamma),
        kappa: Some(cfg.kappa),
        note: None,
    };
    save_map(&map, out, &prov)?;
    println!("primitives: {}", map.len());
    Ok(())
}

pub fn optimize(map_path: &Path, manifest: &Path, out: &Path, trace: &Path, cfg: &PipelineConfig) -> Result<()> {
    let map = load_map(map_path)?;
    let (_, set) = load_frames(manifest, cfg, false)?;
    let frames = training_frames(&set, cfg.frame_stride)?;
    info!("optimizing {} primitives against {} frames", map.len(), frames.len());
    let outcome = optimize_anchored(&map, &frames, &cfg.optimizer())?;
    save_map(&outcome.map, out, &provenance_or_default(map_path))?;
    write_loss_trace(trace, &outcome.trace)?;
    println!(
        "iterations: {}  loss: {} -> {}",
        outcome.trace.len() - 1,
        outcome.trace[0],
        outcome.trace[outcome.trace.len() - 1]
    );
    Ok(())
}

pub fn associate(map_path: &Path, manifest: &Path, out: &Path, cfg: &PipelineConfig) -> Result<()> {
    let mut map = load_map(map_path)?;
    let m = DatasetManifest::load(manifest)?;
    if !m.has_embeddings() {
        return Err(Error::Schema {
            field: "embedding".into(),
            reason: "every frame needs an embedding raster".into(),
        });
    }
    let (_, set) = load_frames(manifest, cfg, true)?;
    if let Some(d) = cfg.feature_dim {
        if let Some(e) = set.frames.iter().filter_map(|f| f.embedding.as_ref()).find(|e| e.dim != d) {
            return Err(Error::Schema {
                field: "feature_dim".into(),
                reason: format!("embedding rasters have dimension {}, expected {d}", e.dim),
            });
        }
    }
    let stats = associate_frames(&mut map, &set, &cfg.association())?;
    save_map(&map, out, &provenance_or_default(map_path))?;
    println!(
        "featured: {} of {}  matched pixels: {} of {}",
        map.featured_count(),
        map.len(),
        stats.matched,
        stats.pixels
    );
    Ok(())
}

pub enum GridSource {
    From(PathBuf),
    Explicit([f64; 3], [u32; 3]),
}

pub fn project(map_path: &Path, out: &Path, grid: GridSource, texts: Option<&Path>, cfg: &PipelineConfig) -> Result<()> {
    let map = load_map(map_path)?;
    let spec = match grid {
        GridSource::From(p) => load_field(&p)?.spec,
        GridSource::Explicit(o, d) => GridSpec::new(Vec3::new(o[0], o[1], o[2]), d, cfg.voxel_size)?,
    };
    let texts = texts.map(TextEmbeddingSet::load).transpose()?;
    let p = project_map(&map, &spec, cfg.tau_occ, texts.as_ref())?;
    save_field(&p.field, out)?;
    println!(
        "occupied: {}  labeled: {}  degenerate: {}",
        p.stats.occupied, p.stats.labeled, p.stats.degenerate
    );
    Ok(())
}

pub fn build_bench(manifest: &Path, out: &Path, cfg: &PipelineConfig) -> Result<()> {
    let (_, set) = load_frames(manifest, cfg, false)?;
    let sparse = extract_sparse_voxels(&set, cfg.pixel_stride, cfg.voxel_size)?;
    let (spec, labels) = densify_grid(&sparse)?;
    let mask = observability_mask(&spec, &set, cfg.frame_stride, cfg.tolerance_voxels, cfg.dilate)?;
    let field = assemble_benchmark(&spec, &labels, &mask)?;
    save_field(&field, out)?;
    println!(
        "sparse voxels: {}  grid: {:?}  known: {}",
        sparse.len(),
        spec.dims,
        field.labels.iter().filter(|&&l| l != 255).count()
    );
    Ok(())
}

pub struct EvalInputs<'a> {
    pub pred_map: &'a Path,
    pub pred_traj: &'a Path,
    pub gt_grid: &'a Path,
    pub gt_traj: &'a Path,
    pub texts: Option<&'a Path>,
    pub out: Option<&'a Path>,
}

pub fn eval(inputs: &EvalInputs<'_>, estimate_scale: bool, classes: Option<Vec<u8>>, cfg: &PipelineConfig) -> Result<()> {
    let gt = load_field(inputs.gt_grid)?;
    let gt_traj = Trajectory::load(inputs.gt_traj)?;
    let pred_traj = Trajectory::load(inputs.pred_traj)?;
    let map = load_map(inputs.pred_map)?;
    let texts = inputs.texts.map(TextEmbeddingSet::load).transpose()?;
    let opts = EvalOptions {
        estimate_scale,
        texts: texts.as_ref(),
        tau_occ: cfg.tau_occ,
        class_subset: classes,
    };
    let report = align_and_evaluate(&map, &pred_traj, &gt, &gt_traj, &opts)?;
    eprint!("{}", report.to_table());
    if let Some(p) = inputs.out {
        report.save(p)?;
    }
    println!("{}", report.to_json());
    Ok(())
}

pub fn query(field: &Path, texts: &Path, category: &str, out: &Path) -> Result<()> {
    let f = load_field(field)?;
    let t = TextEmbeddingSet::load(texts)?;
    let class = t.class_id(category).ok_or_else(|| {
        Error::InvalidInput(format!(
            "unknown category `{category}`; available: {}",
            t.categories().join(", ")
        ))
    })?;
    let features = f
        .features
        .as_ref()
        .ok_or_else(|| Error::InvalidInput(format!("{} carries no voxel features", field.display())))?;
    if features.dim != t.dim() {
        return Err(Error::InvalidInput(format!(
            "voxel features have dimension {}, text embeddings {}",
            features.dim,
            t.dim()
        )));
    }
    let mut csv = String::from("i,j,k,similarity\n");
    for (&idx, feat) in &features.entries {
        let [i, j, k] = f.spec.unravel(idx as usize);
        let s = text_similarity(feat, &t)?[class as usize - 1];
        let _ = writeln!(csv, "{i},{j},{k},{s}");
    }
    std::fs::write(out, csv).map_err(|e| io_err(out, e))?;
    println!("voxels: {}", features.entries.len());
    Ok(())
}
