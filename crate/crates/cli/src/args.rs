//! Command-line surface.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

#[derive(Parser, Debug)]
#[command(
    name = "vn-hgcn",
    version,
    about = "Virtual-node heterogeneous graph network: train, evaluate, and probe long-range influence"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Train a model and write checkpoint, metrics CSV, and config snapshot.
    Train(TrainArgs),
    /// Score a checkpoint on a dataset split.
    Eval(EvalArgs),
    /// Long-range influence grids for an augmented and a plain model.
    Perturb(PerturbArgs),
    /// Hyperparameter sweep over one axis.
    Sweep(SweepArgs),
    /// Print the augmented schema and virtual-node assignment tables.
    AugmentInspect(AugmentInspectArgs),
    /// Load and validate a dataset directory.
    ValidateData(ValidateDataArgs),
}

/// Training hyperparameters as optional flags; unset values fall back to the
/// config file and then to the built-in defaults.
#[derive(Args, Debug, Clone, Default)]
pub struct HyperFlags {
    /// TOML config file with the same keys as the snapshot this run writes.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub l2: Option<f64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub dropout: Option<f64>,
    #[arg(long)]
    pub drop_edge: Option<f64>,
    #[arg(long)]
    pub layers: Option<usize>,
    #[arg(long)]
    pub hidden_dim: Option<usize>,
    #[arg(long)]
    pub d_a: Option<usize>,
    #[arg(long)]
    pub n_virtual: Option<usize>,
    #[arg(long)]
    pub central_dim: Option<usize>,
    /// Virtual-node assignment: uniform-random or round-robin.
    #[arg(long)]
    pub assignment: Option<String>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Training fraction of the labeled nodes.
    #[arg(long)]
    pub ratio: Option<f64>,
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    /// Dataset directory or manifest file.
    #[arg(long)]
    pub data: PathBuf,
    /// Output directory for checkpoint, metrics, and config snapshot.
    #[arg(long, default_value = "run")]
    pub out: PathBuf,
    #[command(flatten)]
    pub hyper: HyperFlags,
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Subset to score: train, val, or test.
    #[arg(long, default_value = "test")]
    pub subset: String,
    /// Split settings must match the training run to score the same nodes.
    #[arg(long, default_value_t = 0.2)]
    pub ratio: f64,
    #[arg(long, default_value_t = 0)]
    pub split_seed: u64,
    /// Optional CSV report path.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct PerturbArgs {
    #[arg(long)]
    pub data: PathBuf,
    /// Checkpoint of the virtual-node model.
    #[arg(long, conflicts_with = "train_both")]
    pub checkpoint_vn: Option<PathBuf>,
    /// Checkpoint of the plain (non-augmented) model.
    #[arg(long, conflicts_with = "train_both")]
    pub checkpoint_plain: Option<PathBuf>,
    /// Train both models here instead of loading checkpoints.
    #[arg(long)]
    pub train_both: bool,
    /// Comma-separated hop distances.
    #[arg(long, default_value = "3,4,5,6,7,8,9,10", value_delimiter = ',')]
    pub hops: Vec<usize>,
    /// Comma-separated noise variances.
    #[arg(long, default_value = "0.1,0.5,1.0,2.0", value_delimiter = ',')]
    pub variances: Vec<f64>,
    /// Target node index within the target type.
    #[arg(long, default_value_t = 0)]
    pub target: usize,
    /// Seed for the shared noise draws.
    #[arg(long, default_value_t = 0)]
    pub noise_seed: u64,
    #[arg(long, default_value = "run")]
    pub out: PathBuf,
    #[command(flatten)]
    pub hyper: HyperFlags,
}

#[derive(Args, Debug)]
pub struct SweepArgs {
    #[arg(long)]
    pub data: PathBuf,
    /// Axis to sweep: hidden_dim, layers, or n_virtual.
    #[arg(long)]
    pub axis: String,
    #[arg(long, value_delimiter = ',')]
    pub values: Vec<usize>,
    #[arg(long, default_value = "0", value_delimiter = ',')]
    pub seeds: Vec<u64>,
    /// Parallel sweep cells.
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
    #[arg(long, default_value = "run")]
    pub out: PathBuf,
    #[command(flatten)]
    pub hyper: HyperFlags,
}

#[derive(Args, Debug)]
pub struct AugmentInspectArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, default_value_t = 16)]
    pub n_virtual: usize,
    #[arg(long, default_value_t = 64)]
    pub central_dim: usize,
    #[arg(long, default_value = "uniform-random")]
    pub assignment: String,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Args, Debug)]
pub struct ValidateDataArgs {
    #[arg(long)]
    pub data: PathBuf,
}
