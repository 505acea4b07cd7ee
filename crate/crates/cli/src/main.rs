mod artifacts;
mod commands;
mod config;
mod exit;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(name = "meshgnn", version, about = "Mesh-based GNN surrogate for finite-element soft-tissue deformation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone, Debug, Default)]
pub struct Common {
    /// Root random seed (overrides the config).
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads for parallel stages.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Output directory (overrides the config).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate or import a tetrahedral mesh.
    Mesh {
        #[command(subcommand)]
        action: MeshAction,
        #[command(flatten)]
        common: Common,
    },
    /// Run the FEM oracle over every load case and write a dataset.
    Simulate(SimulateArgs),
    /// Train a model on a dataset.
    Train(TrainArgs),
    /// Evaluate a checkpoint (or a baseline) on one split.
    Eval(EvalArgs),
    /// Write per-node displacement predictions for one sample.
    Predict(PredictArgs),
    /// Time single-sample inference.
    Bench(BenchArgs),
    /// Train and compare aggregator / layer-type variants.
    Ablate(TrainArgs),
}

#[derive(Subcommand)]
pub enum MeshAction {
    /// Structured grid of nx × ny × nz nodes split into tetrahedra.
    Gen {
        #[arg(long)]
        nx: usize,
        #[arg(long)]
        ny: usize,
        #[arg(long)]
        nz: usize,
        /// Node spacing in mm.
        #[arg(long, default_value_t = 1.0)]
        spacing: f64,
        /// Tumour region as `xmin,ymin,zmin,xmax,ymax,zmax` in mm.
        #[arg(long, value_delimiter = ',', num_args = 6)]
        tumour_box: Option<Vec<f64>>,
    },
    /// Read a TetGen `.node` / `.ele` pair.
    Import {
        #[arg(long)]
        node: PathBuf,
        #[arg(long)]
        ele: PathBuf,
    },
}

#[derive(Args)]
pub struct SimulateArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// Mesh directory written by `meshgnn mesh` (overrides the config's mesh source).
    #[arg(long)]
    pub mesh: Option<PathBuf>,
    /// Only enumerate load cases and print their count.
    #[arg(long)]
    pub dry_run: bool,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Args)]
pub struct TrainArgs {
    /// Dataset directory written by `meshgnn simulate`.
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub max_epochs: Option<usize>,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum SplitArg {
    Train,
    Validation,
    Test,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Baseline {
    /// Predicts zero displacement everywhere.
    Zero,
    /// Returns the ground-truth labels.
    Oracle,
}

#[derive(Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, required_unless_present = "baseline")]
    pub checkpoint: Option<PathBuf>,
    #[arg(long, value_enum, conflicts_with = "checkpoint")]
    pub baseline: Option<Baseline>,
    #[arg(long, value_enum, default_value = "test")]
    pub split: SplitArg,
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Hit threshold in mm (overrides the config).
    #[arg(long)]
    pub threshold_mm: Option<f64>,
    /// Leave fixed-boundary nodes out of every statistic.
    #[arg(long)]
    pub free_only: bool,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Args)]
pub struct PredictArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Sample index within the dataset.
    #[arg(long, default_value_t = 0)]
    pub sample: usize,
    /// Also write a VTK file with the predicted and true displacement.
    #[arg(long)]
    pub vtk: bool,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Args)]
pub struct BenchArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long, default_value_t = 20)]
    pub repeats: usize,
    #[arg(long, default_value_t = 3)]
    pub warmup: usize,
    #[command(flatten)]
    pub common: Common,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Mesh { action, common } => commands::mesh(action, &common),
        Command::Simulate(a) => commands::simulate(&a),
        Command::Train(a) => commands::train(&a),
        Command::Eval(a) => commands::eval(&a),
        Command::Predict(a) => commands::predict(&a),
        Command::Bench(a) => commands::bench(&a),
        Command::Ablate(a) => commands::ablate(&a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit::exit_code(&e))
        }
    }
}
