//! `rec-apc` command-line tool.
//!
//! Exit status is 0 on success, 1 when the library reports an error and 2
//! for malformed command lines.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

mod commands;

#[derive(Debug, Parser)]
#[command(name = "rec-apc", version, about = "Plan recommendations for users of unknown type who may churn")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Compute an (approximately) optimal recommendation policy.
    Solve(SolveArgs),
    /// Show the beliefs visited by a category sequence under repeated likes.
    Walk(WalkArgs),
    /// Instance constants, convergence report and uncertainty curve.
    Analyze(AnalyzeArgs),
    /// Monte Carlo sessions against a prefix-then-tail policy.
    Simulate(SimulateArgs),
    /// Generate a random instance.
    Gen(GenArgs),
    /// Aggregate a ratings table into an instance.
    Ingest(IngestArgs),
    /// Write the instance as a discounted POMDP in .pomdp text format.
    ExportPomdp(ExportArgs),
    /// Time the branch-and-bound solver on generated instances.
    Bench(BenchArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Algorithm {
    Bnb,
    Dp,
    Brute,
    Myopic,
    Bfa,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Queue {
    BestFirst,
    Fifo,
}

#[derive(Debug, Args)]
struct SolveArgs {
    /// Instance JSON file.
    #[arg(long)]
    instance: PathBuf,
    #[arg(long, default_value_t = 1e-6)]
    epsilon: f64,
    #[arg(long, value_enum, default_value_t = Algorithm::Bnb)]
    algorithm: Algorithm,
    #[arg(long, value_enum, default_value_t = Queue::BestFirst)]
    queue: Queue,
    /// Horizon for dp, brute and myopic; defaults to the horizon implied by
    /// --epsilon.
    #[arg(long)]
    horizon: Option<usize>,
    /// Branch-and-bound worker threads.
    #[arg(long, default_value_t = 1)]
    workers: usize,
    /// Abort branch-and-bound after this many expansions.
    #[arg(long)]
    node_budget: Option<u64>,
    /// Also write the result as JSON.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct WalkArgs {
    #[arg(long)]
    instance: PathBuf,
    /// Comma-separated categories (names or 0-based indices).
    #[arg(long)]
    prefix: String,
    /// Comma-separated start belief; defaults to the prior.
    #[arg(long)]
    start: Option<String>,
    /// Write the walk as CSV instead of printing JSON.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct AnalyzeArgs {
    #[arg(long)]
    instance: PathBuf,
    #[arg(long, default_value_t = 1e-6)]
    epsilon: f64,
    #[arg(long, default_value_t = 500)]
    max_rounds: usize,
    /// Rounds in the uncertainty curve written by --curve-out.
    #[arg(long, default_value_t = 20)]
    rounds: usize,
    #[arg(long)]
    curve_out: Option<PathBuf>,
    /// Write constants and report as JSON.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct SimulateArgs {
    #[arg(long)]
    instance: PathBuf,
    /// Comma-separated categories played before the tail.
    #[arg(long, default_value = "")]
    prefix: String,
    /// Category repeated after the prefix.
    #[arg(long)]
    tail: String,
    #[arg(long, default_value_t = 100_000)]
    sessions: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Per-session CSV (session,type,likes).
    #[arg(long)]
    sessions_out: Option<PathBuf>,
    /// Summary JSON.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct GenArgs {
    #[arg(long)]
    types: usize,
    #[arg(long)]
    categories: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 0.01)]
    clip: f64,
    #[arg(long, default_value_t = 0.5)]
    prior_std: f64,
    /// Instance JSON destination; printed when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ClusterModeArg {
    Kmeans,
    External,
}

#[derive(Debug, Args)]
struct IngestArgs {
    /// CSV with header user_id,item_id,rating.
    #[arg(long)]
    ratings: PathBuf,
    #[arg(long)]
    user_clusters: usize,
    #[arg(long)]
    item_clusters: usize,
    #[arg(long, value_enum, default_value_t = ClusterModeArg::Kmeans)]
    mode: ClusterModeArg,
    /// CSV user_id,cluster (external mode).
    #[arg(long)]
    user_assignments: Option<PathBuf>,
    /// CSV item_id,cluster (external mode).
    #[arg(long)]
    item_assignments: Option<PathBuf>,
    #[arg(long, default_value_t = 0.0)]
    noise_std: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 5.0)]
    rating_max: f64,
    /// Instance JSON destination; printed when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Imputed cells, objective trace and cluster memberships as JSON.
    #[arg(long)]
    metadata_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ExportArgs {
    #[arg(long)]
    instance: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct BenchArgs {
    /// Comma-separated TYPESxCATEGORIES pairs, e.g. 3x2,3x4.
    #[arg(long, default_value = "3x2,3x4,3x6,3x8")]
    sizes: String,
    #[arg(long, default_value_t = 50)]
    reps: usize,
    #[arg(long, default_value_t = 1e-6)]
    epsilon: f64,
    #[arg(long, default_value_t = 1000)]
    resamples: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Solver workers per timed solve; rows are labelled parallel when > 1.
    #[arg(long, default_value_t = 1)]
    workers: usize,
    /// CSV destination; printed when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Solve(a) => commands::solve(a),
        Command::Walk(a) => commands::walk(a),
        Command::Analyze(a) => commands::analyze(a),
        Command::Simulate(a) => commands::simulate(a),
        Command::Gen(a) => commands::gen(a),
        Command::Ingest(a) => commands::ingest(a),
        Command::ExportPomdp(a) => commands::export_pomdp(a),
        Command::Bench(a) => commands::bench(a),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(commands::Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(commands::Failure::Domain(err)) => {
            eprintln!("error: {err}");
            ExitCode::from(1)
        }
    }
}
