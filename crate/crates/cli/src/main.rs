//! `freeocc` command-line front end.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use freeocc::Error;

use crate::config::PipelineConfig;

#[derive(Parser, Debug)]
#[command(name = "freeocc", version, about = "Gaussian maps to open-vocabulary voxel occupancy")]
struct Cli {
    /// JSON pipeline configuration; flags take precedence over it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Seed for every random choice.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads; outputs do not depend on it.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Debug logging on standard error.
    #[arg(long, short, global = true)]
    verbose: bool,
    #[command(flatten)]
    overrides: Overrides,
    #[command(subcommand)]
    command: Command,
}

/// Per-field overrides of the configuration file.
#[derive(Args, Debug, Default)]
struct Overrides {
    /// Footprint multiplier for initial primitive scales.
    #[arg(long, global = true)]
    gamma: Option<f64>,
    /// Elongation of initial primitives along the viewing ray.
    #[arg(long, global = true)]
    kappa: Option<f64>,
    /// Initial opacity.
    #[arg(long, global = true)]
    o_init: Option<f64>,
    /// Weight of the depth term in the rendering loss.
    #[arg(long, global = true)]
    beta: Option<f64>,
    /// Occupancy threshold for a voxel to count as occupied.
    #[arg(long, global = true)]
    tau_occ: Option<f64>,
    /// Voxel edge length in meters.
    #[arg(long, global = true)]
    voxel_size: Option<f64>,
    /// Pixel sampling stride for initialization and association.
    #[arg(long, global = true)]
    pixel_stride: Option<u32>,
    /// Use every n-th frame for optimization and masking.
    #[arg(long, global = true)]
    frame_stride: Option<usize>,
    /// Depth readings beyond this range are discarded.
    #[arg(long, global = true)]
    max_range: Option<f64>,
    /// Maximum distance between a lifted pixel and its primitive.
    #[arg(long, global = true)]
    association_radius: Option<f64>,
    /// Embedding dimension.
    #[arg(long, global = true)]
    feature_dim: Option<usize>,
    /// Optimizer iteration budget.
    #[arg(long, global = true)]
    max_iters: Option<usize>,
    /// Occlusion tolerance of the observability mask, in voxels.
    #[arg(long, global = true)]
    tolerance_voxels: Option<f64>,
    /// Dilate the observability mask by one voxel.
    #[arg(long, global = true)]
    dilate: bool,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Render a synthetic box scene into a dataset directory.
    Synth {
        #[arg(long)]
        scene: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Back-project every frame into ray-aligned primitives.
    InitMap {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Fit scale, rotation, opacity, and color with means held fixed.
    Optimize {
        #[arg(long)]
        map: PathBuf,
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Loss trace CSV.
        #[arg(long)]
        trace: PathBuf,
    },
    /// Attach pixel embeddings to primitives.
    Associate {
        #[arg(long)]
        map: PathBuf,
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Project a map onto a voxel grid.
    Project {
        #[arg(long)]
        map: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Copy the grid of this occupancy file.
        #[arg(long, conflicts_with_all = ["origin", "dims"])]
        grid_from: Option<PathBuf>,
        /// Grid min corner as `x,y,z`.
        #[arg(long, value_delimiter = ',', requires = "dims")]
        origin: Option<Vec<f64>>,
        /// Voxel counts as `nx,ny,nz`.
        #[arg(long, value_delimiter = ',', requires = "origin")]
        dims: Option<Vec<u32>>,
        #[arg(long)]
        texts: Option<PathBuf>,
    },
    /// Build a ground-truth occupancy grid from labeled RGB-D frames.
    BuildBench {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Align a map to a reference trajectory and score it.
    Eval {
        #[arg(long)]
        pred_map: PathBuf,
        #[arg(long)]
        pred_traj: PathBuf,
        #[arg(long)]
        gt_grid: PathBuf,
        #[arg(long)]
        gt_traj: PathBuf,
        /// `mono` aligns with a similarity, `rgbd` with a rigid motion.
        #[arg(long, value_enum, default_value_t = Mode::Mono)]
        mode: Mode,
        #[arg(long)]
        texts: Option<PathBuf>,
        /// Class ids to score, e.g. `1,2,5`; defaults to every category.
        #[arg(long, value_delimiter = ',')]
        classes: Option<Vec<u8>>,
        /// Report JSON; printed to standard output as well.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Export per-voxel similarity to one category.
    Query {
        #[arg(long)]
        field: PathBuf,
        #[arg(long)]
        texts: PathBuf,
        #[arg(long)]
        category: String,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Mode {
    /// Monocular: Sim(3) alignment.
    Mono,
    /// RGB-D: SE(3) alignment.
    Rgbd,
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::InvalidInput(_) | Error::Schema { .. } => 2,
        Error::Io { .. } | Error::Format { .. } => 3,
        Error::InsufficientCorrespondences { .. }
        | Error::DegenerateConfiguration(_)
        | Error::DegenerateMixture
        | Error::DegenerateFeature { .. }
        | Error::NumericalFailure { .. } => 4,
    }
}

fn resolve(cli: &Cli) -> freeocc::Result<PipelineConfig> {
    let mut c = match &cli.config {
        Some(p) => PipelineConfig::load(p)?,
        None => PipelineConfig::default(),
    };
    let o = &cli.overrides;
    macro_rules! apply {
        ($($f:ident),*) => { $( if let Some(v) = o.$f { c.$f = v; } )* };
    }
    apply!(gamma, kappa, o_init, beta, tau_occ, voxel_size, pixel_stride, frame_stride, association_radius, max_iters, tolerance_voxels);
    if o.max_range.is_some() {
        c.max_range = o.max_range;
    }
    if o.feature_dim.is_some() {
        c.feature_dim = o.feature_dim;
    }
    if cli.seed.is_some() {
        c.seed = cli.seed;
    }
    c.dilate |= o.dilate;
    c.validate()?;
    Ok(c)
}

fn run(cli: Cli) -> freeocc::Result<()> {
    let cfg = resolve(&cli)?;
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(Error::Schema {
                field: "threads".into(),
                reason: "must be at least 1".into(),
            });
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::InvalidInput(e.to_string()))?;
    }
    log::debug!("configuration: {cfg:?}");
    match cli.command {
        Command::Synth { scene, out } => commands::synth(&scene, &out, &cfg),
        Command::InitMap { manifest, out } => commands::init_map(&manifest, &out, &cfg),
        Command::Optimize { map, manifest, out, trace } => commands::optimize(&map, &manifest, &out, &trace, &cfg),
        Command::Associate { map, manifest, out } => commands::associate(&map, &manifest, &out, &cfg),
        Command::Project {
            map,
            out,
            grid_from,
            origin,
            dims,
            texts,
        } => {
            let grid = match (grid_from, origin, dims) {
                (Some(p), _, _) => commands::GridSource::From(p),
                (None, Some(o), Some(d)) if o.len() == 3 && d.len() == 3 => {
                    commands::GridSource::Explicit([o[0], o[1], o[2]], [d[0], d[1], d[2]])
                }
                (None, Some(_), Some(_)) => {
                    return Err(Error::InvalidInput("--origin and --dims take three comma-separated values".into()));
                }
                _ => {
                    return Err(Error::InvalidInput("pass --grid-from or both --origin and --dims".into()));
                }
            };
            commands::project(&map, &out, grid, texts.as_deref(), &cfg)
        }
        Command::BuildBench { manifest, out } => commands::build_bench(&manifest, &out, &cfg),
        Command::Eval {
            pred_map,
            pred_traj,
            gt_grid,
            gt_traj,
            mode,
            texts,
            classes,
            out,
        } => commands::eval(
            &commands::EvalInputs {
                pred_map: &pred_map,
                pred_traj: &pred_traj,
                gt_grid: &gt_grid,
                gt_traj: &gt_traj,
                texts: texts.as_deref(),
                out: out.as_deref(),
            },
            mode == Mode::Mono,
            classes,
            &cfg,
        ),
        Command::Query {
            field,
            texts,
            category,
            out,
        } => commands::query(&field, &texts, &category, &out),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = if cli.verbose { "debug" } else { "warn" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .target(env_logger::Target::Stderr)
        .init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
