use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

mod commands;

/// Building-footprint segmentation toolkit: label weighting, loss checks,
/// instance extraction, ensembling, evaluation, calibration and deduplication.
#[derive(Debug, Parser)]
#[command(name = "seg2f", version)]
struct Cli {
    /// Seed for every random draw.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Worker threads; defaults to one per core.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// error, warn, info, debug or trace; overrides SEG2F_LOG.
    #[arg(long, global = true)]
    log_level: Option<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate synthetic scenes with ground truth and confidence rasters.
    Synth(SynthArgs),
    /// Compute per-pixel loss weights from a label raster.
    Weights(WeightsArgs),
    /// Compare analytic loss gradients with finite differences.
    Losscheck(LosscheckArgs),
    /// Turn a confidence raster into building polygons.
    Postprocess(PostprocessArgs),
    /// Average confidence rasters predicted at several scales.
    Ensemble(EnsembleArgs),
    /// Match detections to ground truth and write the PR curve.
    Evaluate(EvaluateArgs),
    /// Find the score threshold reaching a target precision.
    Calibrate(CalibrateArgs),
    /// Merge duplicate detections from overlapping imagery.
    Dedup(DedupArgs),
}

#[derive(Debug, Args)]
struct SynthArgs {
    #[arg(long)]
    out_dir: PathBuf,
    #[arg(long, default_value_t = 1)]
    scenes: usize,
    #[arg(long, default_value_t = seg2f::synth::DEFAULT_SCENE_SIZE)]
    size: usize,
    #[arg(long, default_value_t = 10)]
    count_min: usize,
    #[arg(long, default_value_t = 40)]
    count_max: usize,
    #[arg(long, default_value_t = seg2f::synth::MIN_BUILDING)]
    min_size: usize,
    #[arg(long, default_value_t = 40)]
    max_size: usize,
    #[arg(long, default_value_t = 0.1)]
    dense_prob: f64,
    #[arg(long, default_value_t = 0.0)]
    noise: f64,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Scheme {
    Gaussian,
    Unet,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Dense {
    Building,
    Ignore,
}

#[derive(Debug, Args)]
struct WeightsArgs {
    #[arg(long)]
    labels: PathBuf,
    #[arg(long, value_enum, default_value_t = Scheme::Gaussian)]
    scheme: Scheme,
    /// Length scale in pixels; 3 for gaussian, 5 for unet when omitted.
    #[arg(long)]
    sigma: Option<f64>,
    #[arg(long, default_value_t = 200.0)]
    scale: f64,
    #[arg(long, default_value_t = 1.0)]
    floor: f64,
    #[arg(long, value_enum, default_value_t = Dense::Building)]
    dense: Dense,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct LosscheckArgs {
    #[arg(long, default_value_t = 100)]
    cases: usize,
    #[arg(long, default_value_t = 8)]
    size: usize,
    #[arg(long, default_value_t = 1e-4)]
    tolerance: f64,
}

#[derive(Debug, Args)]
struct PostprocessArgs {
    #[arg(long)]
    conf: PathBuf,
    #[arg(long, default_value_t = 0.5)]
    threshold: f64,
    #[arg(long, default_value_t = seg2f::postprocess::DEFAULT_MIN_AREA)]
    min_area: f64,
    #[arg(long, default_value_t = seg2f::postprocess::DEFAULT_SIMPLIFY)]
    simplify: f64,
    /// Skip the one-pixel instance dilation.
    #[arg(long)]
    no_dilate: bool,
    /// Image id recorded on every detection.
    #[arg(long)]
    image: Option<String>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct EnsembleArgs {
    #[arg(long, num_args = 1.., required = true)]
    inputs: Vec<PathBuf>,
    /// Comma-separated scale of each input relative to the output, e.g. 1,512/448.
    #[arg(long)]
    scales: String,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct EvaluateArgs {
    #[arg(long)]
    det: PathBuf,
    #[arg(long)]
    gt: PathBuf,
    #[arg(long, default_value_t = seg2f::metrics::DEFAULT_MATCH_IOU)]
    iou: f64,
    /// Samples per coordinate unit when rasterizing polygons for IoU.
    #[arg(long, default_value_t = seg2f::geometry::DEFAULT_IOU_RESOLUTION)]
    resolution: f64,
    /// JSON object mapping image ids to group keys.
    #[arg(long)]
    groups: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct CalibrateArgs {
    /// Scored detections to calibrate on.
    #[arg(long)]
    matches: PathBuf,
    #[arg(long)]
    gt: PathBuf,
    #[arg(long)]
    precision: f64,
    #[arg(long, default_value_t = seg2f::metrics::DEFAULT_MATCH_IOU)]
    iou: f64,
    #[arg(long, default_value_t = seg2f::geometry::DEFAULT_IOU_RESOLUTION)]
    resolution: f64,
    /// Per-cell thresholds at the given level, e.g. level=4; coordinates are lon/lat.
    #[arg(long)]
    cells: Option<String>,
    /// JSON object mapping cell tokens to detection weights.
    #[arg(long)]
    cell_weights: Option<PathBuf>,
    /// CSV of per-cell thresholds.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct DedupArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    coverage: PathBuf,
    #[arg(long, default_value_t = seg2f::dedup::DEFAULT_DEDUP_IOU)]
    iou: f64,
    #[arg(long, default_value_t = seg2f::dedup::DEFAULT_AGREE_CONF)]
    agree_conf: f64,
    #[arg(long, default_value_t = seg2f::geometry::DEFAULT_IOU_RESOLUTION)]
    resolution: f64,
    #[arg(long)]
    out: PathBuf,
}

fn init_logging(level: Option<&str>) {
    let env = env_logger::Env::new().filter_or("SEG2F_LOG", "warn");
    let mut builder = env_logger::Builder::from_env(env);
    if let Some(level) = level {
        builder.parse_filters(level);
    }
    builder.format_timestamp(None).init();
}

fn exit_code(err: &seg2f::Error) -> u8 {
    if err.is_io() {
        2
    } else {
        1
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    init_logging(cli.log_level.as_deref());
    if let Some(n) = cli.threads {
        if n == 0 {
            eprintln!("error: --threads must be at least 1");
            return ExitCode::from(1);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
        {
            eprintln!("error: cannot start thread pool: {e}");
            return ExitCode::from(1);
        }
    }
    let outcome = match &cli.command {
        Command::Synth(a) => commands::synth(a, cli.seed),
        Command::Weights(a) => commands::weights(a),
        Command::Losscheck(a) => commands::losscheck(a, cli.seed),
        Command::Postprocess(a) => commands::postprocess(a),
        Command::Ensemble(a) => commands::ensemble(a),
        Command::Evaluate(a) => commands::evaluate(a),
        Command::Calibrate(a) => commands::calibrate(a),
        Command::Dedup(a) => commands::dedup(a),
    };
    match outcome {
        Ok(summary) => {
            for (key, value) in summary {
                println!("{key}={value}");
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            log::debug!("{e:?}");
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
