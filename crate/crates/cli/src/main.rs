//! `equigraph` command-line tool: dataset generation, training, equivariance
//! and gradient checks, and result reports.

mod commands;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use equigraph::blocks::{Aggregation, BlockKind};
use equigraph::harness::GroupTag;

#[derive(Parser, Debug)]
#[command(
    name = "equigraph",
    version,
    about = "Equivariant graph networks on point-cloud graphs"
)]
#[command(args_override_self = true)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Generate a labelled polytope dataset (train and test splits).
    Gen(GenArgs),
    /// Train one model per seed and summarise the accuracies.
    Train(TrainArgs),
    /// Probe a trained model for invariance under a transformation group.
    Check(CheckArgs),
    /// Compare reverse-mode gradients with finite differences.
    Gradcheck(GradcheckArgs),
    /// Render a results.csv as a table or plot-ready JSON.
    Report(ReportArgs),
    /// Repeat the command recorded in a manifest.
    Rerun(RerunArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum FamilyArg {
    Orthogonal,
    OrthogonalDilation,
    NonOrthogonal,
}

#[derive(Args, Debug)]
pub struct GenArgs {
    #[arg(long)]
    pub dim: usize,
    #[arg(long, value_enum, default_value = "orthogonal")]
    pub family: FamilyArg,
    /// Target mean of ||A^T A - I||_F for the non-orthogonal family.
    #[arg(long, allow_negative_numbers = true)]
    pub mu: Option<f64>,
    #[arg(long, default_value_t = 0.5, allow_negative_numbers = true)]
    pub gamma_min: f64,
    #[arg(long, default_value_t = 2.0, allow_negative_numbers = true)]
    pub gamma_max: f64,
    /// Half-width of the uniform translation box.
    #[arg(long, default_value_t = 5.0, allow_negative_numbers = true)]
    pub translation: f64,
    /// Test copies per class.
    #[arg(long, default_value_t = 20)]
    pub copies: usize,
    /// Transformed training copies per class, on top of the untransformed one.
    #[arg(long, default_value_t = 0)]
    pub augment_k: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// One random scalar feature per node instead of featureless nodes.
    #[arg(long)]
    pub node_features: bool,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum PresetArg {
    Gn,
    Dgn,
    Sdgn,
    Agn,
    Combined,
}

impl PresetArg {
    pub fn kind(self) -> (BlockKind, bool) {
        match self {
            PresetArg::Gn => (BlockKind::Gn, false),
            PresetArg::Dgn => (BlockKind::Dgn, false),
            PresetArg::Sdgn => (BlockKind::Dgn, true),
            PresetArg::Agn => (BlockKind::Agn, false),
            PresetArg::Combined => (BlockKind::Combined, false),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum RhoArg {
    Sum,
    Mean,
}

impl From<RhoArg> for Aggregation {
    fn from(r: RhoArg) -> Self {
        match r {
            RhoArg::Sum => Aggregation::Sum,
            RhoArg::Mean => Aggregation::Mean,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum PsiArg {
    Identity,
    Weighted,
    WeightedEdge,
}

/// Model source shared by `train` and `gradcheck`: a JSON file or a preset.
#[derive(Args, Debug)]
pub struct ModelArgs {
    /// Model configuration JSON, either a bare model config or
    /// `{"model": ..., "train": ...}`.
    #[arg(long, conflicts_with = "preset")]
    pub config: Option<PathBuf>,
    /// Polytope-experiment architecture, used when no config file is given.
    #[arg(long, value_enum)]
    pub preset: Option<PresetArg>,
    #[arg(long, value_enum, default_value = "sum")]
    pub rho: RhoArg,
    #[arg(long, value_enum, default_value = "identity")]
    pub psi: PsiArg,
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    /// Directory written by `gen`.
    #[arg(long)]
    pub data: PathBuf,
    /// Further `gen` directories whose test splits become extra columns.
    #[arg(long = "test")]
    pub tests: Vec<PathBuf>,
    #[arg(long, default_value_t = 1)]
    pub seeds: usize,
    #[arg(long, default_value_t = 0)]
    pub base_seed: u64,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct CheckArgs {
    /// Directory holding model.json and params.json.
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Dataset directory, or a `gen` directory whose test split is used.
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, value_parser = parse_group)]
    pub group: GroupTag,
    #[arg(long, default_value_t = 100)]
    pub trials: usize,
    #[arg(long, default_value_t = 1e-9)]
    pub tol: f64,
    #[arg(long)]
    pub gamma_min: Option<f64>,
    #[arg(long)]
    pub gamma_max: Option<f64>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Where equivariance.json goes; defaults to the checkpoint directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn parse_group(s: &str) -> Result<GroupTag, String> {
    GroupTag::parse(s).map_err(|e| e.to_string())
}

#[derive(Args, Debug)]
pub struct GradcheckArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    /// Dataset directory or `gen` directory (train split); defaults to the
    /// untransformed 3-D polytopes.
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 200)]
    pub coordinates: usize,
    #[arg(long, default_value_t = 1e-6)]
    pub step: f64,
    #[arg(long, default_value_t = 1e-4)]
    pub tol: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum FormatArg {
    Table,
    Json,
}

#[derive(Args, Debug)]
pub struct ReportArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long, value_enum, default_value = "table")]
    pub format: FormatArg,
}

#[derive(Args, Debug)]
pub struct RerunArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    /// Replacement output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// How a command ended, mapped onto the process exit code.
#[derive(Debug)]
pub enum Failure {
    /// A check ran and did not pass.
    Check(String),
    Usage(String),
    Runtime(anyhow::Error),
}

impl<E: Into<anyhow::Error>> From<E> for Failure {
    fn from(e: E) -> Self {
        Failure::Runtime(e.into())
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match commands::run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Check(msg)) => {
            eprintln!("{msg}");
            ExitCode::from(1)
        }
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(3)
        }
    }
}
