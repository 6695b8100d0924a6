//! Command-line argument definitions.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(
    name = "cnmf",
    version,
    about = "Constrained non-negative matrix factorization for count data"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand)]
pub enum Command {
    /// Generate a synthetic instance with planted ground truth
    Gen(GenArgs),
    /// Fit the factor model to a count matrix under support constraints
    Fit(FitArgs),
    /// Infer loadings for new columns against a fitted model
    Transform(TransformArgs),
    /// Evaluation reports
    #[command(subcommand)]
    Eval(EvalCommand),
}

#[derive(Args)]
pub struct GenArgs {
    /// Output directory
    #[arg(long)]
    pub out: PathBuf,
    /// Configuration file (TOML); defaults apply when absent
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Overrides every seed in the configuration
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Args)]
pub struct FitArgs {
    /// Count matrix file
    #[arg(long)]
    pub x: PathBuf,
    /// Per-column support sets file
    #[arg(long)]
    pub supports: PathBuf,
    /// Output model directory
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Simplex scale for the phenotype columns
    #[arg(long)]
    pub lambda: Option<f64>,
    /// Number of random restarts
    #[arg(long)]
    pub restarts: Option<usize>,
    /// Drop the scaled-simplex constraint (support-constrained NMF ablation)
    #[arg(long = "no-simplex")]
    pub no_simplex: bool,
    /// Run restarts and per-column solves sequentially
    #[arg(long)]
    pub deterministic: bool,
}

#[derive(Args)]
pub struct TransformArgs {
    /// Count matrix with the new columns
    #[arg(long)]
    pub x: PathBuf,
    /// Fitted model directory
    #[arg(long)]
    pub model: PathBuf,
    /// Output directory for the inferred loadings
    #[arg(long)]
    pub out: PathBuf,
    /// Optional supports for the new columns; without it only the box
    /// constraint applies
    #[arg(long)]
    pub supports: Option<PathBuf>,
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub deterministic: bool,
}

#[derive(Subcommand)]
pub enum EvalCommand {
    /// Nonzero counts of the phenotype columns
    Sparsity(SparsityArgs),
    /// Sparsity-accuracy tradeoff over a list of lambda values
    Sweep(SweepArgs),
    /// Cross-validated binary prediction from loadings and/or raw counts
    Predict(PredictArgs),
    /// Highest-weight terms per condition
    #[command(name = "top-terms")]
    TopTerms(TopTermsArgs),
}

#[derive(Args)]
pub struct SparsityArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Args)]
pub struct SweepArgs {
    #[arg(long)]
    pub x: PathBuf,
    #[arg(long)]
    pub supports: PathBuf,
    /// Comma-separated lambda values
    #[arg(long, value_delimiter = ',', required = true)]
    pub lambdas: Vec<f64>,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub restarts: Option<usize>,
    #[arg(long = "no-simplex")]
    pub no_simplex: bool,
    #[arg(long)]
    pub deterministic: bool,
}

#[derive(Args)]
pub struct PredictArgs {
    #[arg(long)]
    pub x: PathBuf,
    #[arg(long)]
    pub supports: PathBuf,
    /// Binary outcome file
    #[arg(long)]
    pub labels: PathBuf,
    /// Feature set for the classifier
    #[arg(long, value_enum)]
    pub mode: ModeArg,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub restarts: Option<usize>,
    #[arg(long = "no-simplex")]
    pub no_simplex: bool,
    #[arg(long)]
    pub deterministic: bool,
}

#[derive(Args)]
pub struct TopTermsArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Terms per condition
    #[arg(long = "top-k")]
    pub top_k: Option<usize>,
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum ModeArg {
    Loadings,
    Raw,
    Augmented,
}
