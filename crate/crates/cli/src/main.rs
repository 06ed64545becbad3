mod experiment;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use kmodes::algorithms::Algorithm;
use kmodes::eval::TargetMode;

#[derive(Parser)]
#[command(name = "kmodes", version, about = "k-modes clustering experiments on categorical data")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Cluster a dataset from many shared random initializations.
    Cluster(RunArgs),
    /// As `cluster`, then compare every pair of algorithms.
    Bench(RunArgs),
    /// Generate a synthetic clustered dataset.
    Simulate(SimArgs),
    /// Compare algorithms from an existing runs.jsonl.
    Compare(CompareArgs),
}

#[derive(Args, Clone)]
pub struct InputArgs {
    /// Delimited input file.
    #[arg(long)]
    pub input: Option<PathBuf>,
    #[arg(long, default_value_t = ',')]
    pub delimiter: char,
    /// First line holds column names.
    #[arg(long)]
    pub header: bool,
    /// Class label column, by name or zero-based index (negative counts from the end).
    #[arg(long)]
    pub label_col: Option<String>,
    #[arg(long, default_value = "?")]
    pub missing_token: String,
    /// Drop columns containing the missing token (default).
    #[arg(long, conflicts_with = "drop_missing_rows")]
    pub drop_missing_cols: bool,
    /// Drop rows containing the missing token instead of columns.
    #[arg(long)]
    pub drop_missing_rows: bool,
}

#[derive(Args, Clone)]
pub struct CommonArgs {
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Worker threads (default: all cores).
    #[arg(long)]
    pub threads: Option<usize>,
    #[arg(long, env = "KMODES_OUT_DIR", default_value = "kmodes-out")]
    pub out_dir: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
pub enum TargetArg {
    Exact,
    P5,
}

impl From<TargetArg> for TargetMode {
    fn from(t: TargetArg) -> Self {
        match t {
            TargetArg::Exact => TargetMode::ExactMin,
            TargetArg::P5 => TargetMode::Percentile5,
        }
    }
}

#[derive(Args, Clone)]
pub struct RunArgs {
    #[command(flatten)]
    pub input: InputArgs,
    /// Cluster counts, comma separated.
    #[arg(long, value_delimiter = ',', conflicts_with_all = ["k_min", "k_max"])]
    pub k: Vec<usize>,
    #[arg(long, requires = "k_max")]
    pub k_min: Option<usize>,
    #[arg(long, requires = "k_min")]
    pub k_max: Option<usize>,
    /// Initializations per K.
    #[arg(long, default_value_t = 100)]
    pub inits: usize,
    /// Print the initialization count suggested by the 500,000 rule.
    #[arg(long, requires = "p_prime")]
    pub alpha_rule: bool,
    /// Effective dimension used by the 500,000 rule.
    #[arg(long)]
    pub p_prime: Option<u64>,
    #[arg(long, value_delimiter = ',', default_value = "h97,ot,otqt")]
    pub algorithms: Vec<Algorithm>,
    #[command(flatten)]
    pub common: CommonArgs,
    #[arg(long, value_enum, default_value = "exact")]
    pub target: TargetArg,
    #[arg(long, default_value_t = 30)]
    pub min_hits: usize,
    /// Rerun the experiment described by a manifest.json.
    #[arg(long)]
    pub manifest: Option<PathBuf>,
}

#[derive(Args, Clone)]
pub struct SimArgs {
    #[arg(long, default_value_t = 1000)]
    pub n: usize,
    #[arg(long, default_value_t = 10)]
    pub p: usize,
    #[arg(long, default_value_t = 5)]
    pub k: usize,
    /// Categories per coordinate.
    #[arg(long, default_value_t = 4)]
    pub j: usize,
    /// Mode-to-observation time.
    #[arg(long, default_value_t = 1.0)]
    pub t: f64,
    /// Ancestor-to-mode time (default: 70% change probability).
    #[arg(long)]
    pub t0: Option<f64>,
    #[command(flatten)]
    pub common: CommonArgs,
}

#[derive(Args, Clone)]
pub struct CompareArgs {
    /// runs.jsonl written by `cluster` or `bench`.
    #[arg(long)]
    pub runs: PathBuf,
    #[arg(long, value_enum, default_value = "exact")]
    pub target: TargetArg,
    #[arg(long, default_value_t = 30)]
    pub min_hits: usize,
    #[arg(long, env = "KMODES_OUT_DIR", default_value = "kmodes-out")]
    pub out_dir: PathBuf,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Cluster(a) => experiment::cmd_cluster(&a, false),
        Command::Bench(a) => experiment::cmd_cluster(&a, true),
        Command::Simulate(a) => experiment::cmd_simulate(&a),
        Command::Compare(a) => experiment::cmd_compare(&a),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
