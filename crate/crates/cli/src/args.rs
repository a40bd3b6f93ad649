use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use hoverpost_core::postproc::PostprocConfig;

use crate::commands::evaluate::Remap;

#[derive(Debug, Parser)]
#[command(name = "hoverpost", version, about = "HV-map nuclei post-processing, distillation losses and panoptic evaluation")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Segment and classify nuclei from NP, HV and TP maps.
    Postprocess(PostprocessArgs),
    /// Score predicted tiles against ground truth.
    Evaluate(EvaluateArgs),
    /// Write NP, HV and TP training targets for an instance tile.
    GenTargets(GenTargetsArgs),
    /// Check loss gradients against finite differences.
    LossCheck(LossCheckArgs),
    /// Fit a toy student to a synthetic teacher.
    ToyDistill(ToyDistillArgs),
    /// Time post-processing on synthetic dense tiles.
    Bench(BenchArgs),
}

#[derive(Debug, Clone, Args)]
pub struct PostprocFlags {
    #[arg(long, default_value_t = 0.5)]
    pub np_threshold: f32,
    #[arg(long, default_value_t = 0.4)]
    pub energy_threshold: f32,
    /// Smallest kept object, in pixels.
    #[arg(long, default_value_t = 10)]
    pub min_size: usize,
}

impl PostprocFlags {
    pub fn config(&self) -> PostprocConfig {
        PostprocConfig {
            np_threshold: self.np_threshold,
            energy_threshold: self.energy_threshold,
            min_size: self.min_size,
        }
    }
}

#[derive(Debug, Args)]
pub struct PostprocessArgs {
    /// H×W foreground probabilities or H×W×2 logits.
    #[arg(long)]
    pub np: PathBuf,
    /// H×W×2 horizontal/vertical maps.
    #[arg(long)]
    pub hv: PathBuf,
    /// H×W×C type logits (class 0 background).
    #[arg(long)]
    pub tp: PathBuf,
    /// The TP array already holds probabilities.
    #[arg(long)]
    pub tp_probs: bool,
    /// Output prefix: writes <OUT>.npy and <OUT>.json.
    #[arg(long)]
    pub out: PathBuf,
    /// Also write a PNG with instance outlines.
    #[arg(long)]
    pub overlay: Option<PathBuf>,
    /// H×W×3 RGB tile under the overlay.
    #[arg(long, requires = "overlay")]
    pub image: Option<PathBuf>,
    #[command(flatten)]
    pub postproc: PostprocFlags,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    /// Directory of ground-truth tiles (<name>.npy).
    #[arg(long)]
    pub gt: PathBuf,
    /// Directory of predicted tiles with the same names.
    #[arg(long)]
    pub pred: PathBuf,
    /// Report path; printed to stdout as well.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Remap::None)]
    pub remap: Remap,
    /// Score classes 1..=N (default: largest class present).
    #[arg(long)]
    pub num_classes: Option<u32>,
    /// Centroid pairing radius in pixels.
    #[arg(long, default_value_t = 12.0)]
    pub radius: f64,
    #[arg(long, env = "HOVERPOST_THREADS")]
    pub threads: Option<usize>,
}

#[derive(Debug, Args)]
pub struct GenTargetsArgs {
    /// H×W instance labels or H×W×2 labels plus types.
    #[arg(long)]
    pub instances: PathBuf,
    /// Output prefix for <OUT>_np.npy, <OUT>_hv.npy, <OUT>_tp.npy.
    #[arg(long)]
    pub out: PathBuf,
    /// Type channels including background.
    #[arg(long)]
    pub num_types: Option<usize>,
}

#[derive(Debug, Args)]
pub struct LossCheckArgs {
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Fixture sizes as HxW, comma separated.
    #[arg(long, value_delimiter = ',', default_value = "8x8")]
    pub sizes: Vec<String>,
    #[arg(long, default_value_t = 20)]
    pub fixtures: usize,
    /// Type channels including background.
    #[arg(long, default_value_t = 5)]
    pub classes: usize,
    #[arg(long, default_value_t = 1e-4)]
    pub tolerance: f64,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, hide = true)]
    pub corrupt_gradient: bool,
}

#[derive(Debug, Args)]
pub struct ToyDistillArgs {
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 500)]
    pub steps: usize,
    #[arg(long, default_value_t = 0.5)]
    pub alpha: f64,
    #[arg(long, default_value_t = 3.0)]
    pub temperature: f64,
    #[arg(long, default_value_t = 0.2)]
    pub learning_rate: f64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    /// Tile side in pixels.
    #[arg(long, default_value_t = 1000)]
    pub size: usize,
    #[arg(long, default_value_t = 8)]
    pub tiles: usize,
    #[arg(long, default_value_t = 3)]
    pub repetitions: usize,
    /// Worker counts to compare, comma separated.
    #[arg(long, value_delimiter = ',', default_value = "1,2,4", env = "HOVERPOST_THREADS")]
    pub threads: Vec<usize>,
    #[arg(long, default_value_t = 40)]
    pub cell: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub postproc: PostprocFlags,
}
