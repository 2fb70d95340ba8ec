//! Command-line surface.
//!
//! Exit codes: 0 success, 1 pipeline failure (for example no peduncle
//! found), 2 usage or configuration error.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(
    name = "harvest",
    about = "Sweet-pepper harvesting pipeline: color-model training, segmentation, \
             peduncle localization, grasp ranking, row simulation and evaluation",
    version
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit the crop color model from annotated images.
    TrainColor(TrainColorArgs),
    /// Train the logistic patch classifier from three-way annotations.
    TrainPatch(TrainPatchArgs),
    /// Segment an image with a color model; writes mask and score map.
    Segment(SegmentArgs),
    /// Localize the peduncle of the best crop in an RGB-D frame.
    Peduncle(PeduncleArgs),
    /// Rank grasp poses for the best crop in an RGB-D frame.
    Grasp(GraspArgs),
    /// Run the synthetic-row harvest simulation.
    Sim(SimArgs),
    /// Evaluate score maps or attempt logs.
    Eval(EvalArgs),
}

/// Parameters shared by the pipeline subcommands.
#[derive(Debug, Args, Clone)]
pub struct CommonArgs {
    /// TOML run configuration; defaults apply when omitted.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Master seed (overrides the config file).
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory; created if missing.
    #[arg(long)]
    pub out: PathBuf,
    /// Apply the paper-parameter profile on top of the config.
    #[arg(long)]
    pub paper: bool,
}

#[derive(Debug, Args)]
pub struct TrainColorArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Training images (PPM), parallel to --mask.
    #[arg(long = "image", required = true)]
    pub images: Vec<PathBuf>,
    /// Positive-pixel masks (PGM), parallel to --image.
    #[arg(long = "mask", required = true)]
    pub masks: Vec<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TrainPatchArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Training images (PPM), parallel to --pos/--neg.
    #[arg(long = "image", required = true)]
    pub images: Vec<PathBuf>,
    /// Positive-region masks (PGM).
    #[arg(long = "pos", required = true)]
    pub positives: Vec<PathBuf>,
    /// Negative-region masks (PGM).
    #[arg(long = "neg", required = true)]
    pub negatives: Vec<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SegmentArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Input image (PPM P6).
    #[arg(long)]
    pub image: PathBuf,
    /// Color model JSON; the config's detection model applies when omitted.
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Log-likelihood threshold (overrides the config).
    #[arg(long)]
    pub threshold: Option<f64>,
}

#[derive(Debug, Args, Clone)]
pub struct FrameArgs {
    /// RGB image (PPM P6).
    #[arg(long)]
    pub rgb: PathBuf,
    /// Depth image (PGM P5 16-bit, millimeters).
    #[arg(long)]
    pub depth: PathBuf,
    /// Intrinsics + pose sidecar JSON.
    #[arg(long)]
    pub intrinsics: PathBuf,
}

#[derive(Debug, Args)]
pub struct PeduncleArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(flatten)]
    pub frame: FrameArgs,
    /// Pixel scorer: gaussian, scoremap or patch.
    #[arg(long)]
    pub scorer: Option<String>,
    /// Confidence threshold for the filter (overrides the config).
    #[arg(long)]
    pub threshold: Option<f64>,
    /// Score map (16-bit PGM) for the scoremap scorer.
    #[arg(long)]
    pub score_map: Option<PathBuf>,
    /// Classifier weights JSON for the patch scorer.
    #[arg(long)]
    pub weights: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct GraspArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(flatten)]
    pub frame: FrameArgs,
}

#[derive(Debug, Args)]
pub struct SimArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Number of independent runs (seed, seed+1, ...).
    #[arg(long)]
    pub runs: Option<usize>,
    /// Pixel scorer: gaussian, scoremap or patch.
    #[arg(long)]
    pub scorer: Option<String>,
    /// Peduncle confidence threshold (overrides the config).
    #[arg(long)]
    pub threshold: Option<f64>,
    /// Export each run's scene as PLY into the output directory.
    #[arg(long)]
    pub export_scenes: bool,
    /// Write each run's long-range capture as PPM + depth PGM + intrinsics
    /// JSON into the output directory.
    #[arg(long)]
    pub dump_frames: bool,
    /// Write the resolved configuration to the output directory.
    #[arg(long)]
    pub write_config: bool,
    // Table-driven parameter overrides (flag wins over config file).
    #[arg(long, num_args = 3, value_names = ["H", "S", "V"])]
    pub hsv_mu: Option<Vec<f64>>,
    #[arg(long, num_args = 3, value_names = ["H", "S", "V"])]
    pub hsv_sigma: Option<Vec<f64>>,
    #[arg(long)]
    pub cluster_min: Option<usize>,
    #[arg(long)]
    pub cluster_max: Option<usize>,
    #[arg(long)]
    pub downsample_radius: Option<f64>,
    #[arg(long, num_args = 3, value_names = ["CURV", "BOUND", "ROT"])]
    pub grasp_weights: Option<Vec<f64>>,
    #[arg(long)]
    pub angle_threshold: Option<f64>,
    #[arg(long)]
    pub patch_radius: Option<f64>,
    #[arg(long)]
    pub peduncle_cluster_min: Option<usize>,
    #[arg(long)]
    pub peduncle_cluster_max: Option<usize>,
    #[arg(long)]
    pub h_offset: Option<f64>,
    #[arg(long)]
    pub max_attempts: Option<usize>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Attempt log (JSONL) to aggregate into a harvest report.
    #[arg(long)]
    pub attempts: Option<PathBuf>,
    /// Score image (16-bit PGM) for PR evaluation.
    #[arg(long)]
    pub scores: Option<PathBuf>,
    /// Sidecar JSON of the score image ([min, max] affine map).
    #[arg(long)]
    pub scores_sidecar: Option<PathBuf>,
    /// Ground-truth mask (PGM) for PR evaluation.
    #[arg(long)]
    pub labels: Option<PathBuf>,
    /// Number of evenly spaced thresholds in the sweep.
    #[arg(long, default_value_t = 256)]
    pub sweep: usize,
}
