use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use miprune_core::{Aggregation, Normalization, PruneConfig};

mod commands;
mod manifest;

/// Exit code for selection, verification or data failures.
pub const EXIT_FAILURE: u8 = 1;
/// Exit code for malformed invocations.
pub const EXIT_USAGE: u8 = 2;

#[derive(Debug, Parser)]
#[command(name = "miprune", version, about = "Visual token pruning by text-visual mutual information")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Select visual tokens to keep and print them as JSON.
    Select(SelectArgs),
    /// Dump per-token relevance and redundancy scores as JSON.
    Score(ScoreArgs),
    /// Time the selection stage on synthetic inputs and print CSV.
    Bench(BenchArgs),
    /// Run the information-theory identity checks.
    Verify(VerifyArgs),
    /// Render a select output as a keep/prune grid.
    Mask(MaskArgs),
    /// Compare pruning policies on a synthetic scene by planted-token recall.
    Synth(SynthArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum AggArg {
    Max,
    Global,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum NormArg {
    Softmax,
    Minmax,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MethodArg {
    Greedy,
    Fast,
    Random,
    Similarity,
    Attention,
    MiAttention,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MaskFormat {
    Json,
    Pgm,
}

fn positive(s: &str) -> Result<f64, String> {
    match s.parse::<f64>() {
        Ok(x) if x > 0.0 && x.is_finite() => Ok(x),
        _ => Err(format!("expected a positive number, got {s:?}")),
    }
}

fn unit_interval(s: &str) -> Result<f64, String> {
    match s.parse::<f64>() {
        Ok(x) if (0.0..=1.0).contains(&x) => Ok(x),
        _ => Err(format!("expected a number in [0, 1], got {s:?}")),
    }
}

fn fraction(s: &str) -> Result<f64, String> {
    match s.parse::<f64>() {
        Ok(x) if x > 0.0 && x <= 1.0 => Ok(x),
        _ => Err(format!("expected a number in (0, 1], got {s:?}")),
    }
}

fn grid(s: &str) -> Result<(usize, usize), String> {
    let (h, w) = s
        .split_once(['x', 'X'])
        .ok_or_else(|| format!("expected HxW, got {s:?}"))?;
    match (h.trim().parse::<usize>(), w.trim().parse::<usize>()) {
        (Ok(h), Ok(w)) if h > 0 && w > 0 => Ok((h, w)),
        _ => Err(format!("expected positive HxW, got {s:?}")),
    }
}

#[derive(Debug, Clone, Args)]
pub struct ConfigArgs {
    /// Number of visual tokens to keep.
    #[arg(long, default_value_t = 64, value_parser = clap::value_parser!(u64).range(1..))]
    budget: u64,
    /// Softmax temperature for visual-text similarity.
    #[arg(long, default_value_t = 0.1, value_parser = positive)]
    tau: f64,
    /// Temperature for visual self-similarity (defaults to --tau).
    #[arg(long, value_parser = positive)]
    self_tau: Option<f64>,
    /// Relevance weight; 1 disables the redundancy term.
    #[arg(long, default_value_t = 1.0, value_parser = unit_interval)]
    lambda: f64,
    #[arg(long, value_enum, default_value_t = AggArg::Max)]
    agg: AggArg,
    #[arg(long, value_enum, default_value_t = NormArg::Softmax)]
    norm: NormArg,
    /// Exclude each token from its own self-similarity row.
    #[arg(long)]
    mask_diagonal: bool,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

impl ConfigArgs {
    pub fn config(&self) -> PruneConfig {
        PruneConfig {
            tau: self.tau,
            lambda: self.lambda,
            budget: self.budget as usize,
            aggregation: match self.agg {
                AggArg::Max => Aggregation::Max,
                AggArg::Global => Aggregation::Global,
            },
            normalization: match self.norm {
                NormArg::Softmax => Normalization::Softmax,
                NormArg::Minmax => Normalization::Minmax,
            },
            mask_diagonal: self.mask_diagonal,
            self_tau: self.self_tau,
            seed: self.seed,
        }
    }
}

#[derive(Debug, Args)]
pub struct SelectArgs {
    /// Visual embeddings, N_V x d `.npy`.
    visual: PathBuf,
    /// Text embeddings, N_T x d `.npy`.
    text: PathBuf,
    #[command(flatten)]
    config: ConfigArgs,
    #[arg(long, value_enum, default_value_t = MethodArg::Greedy)]
    method: MethodArg,
    /// Encoder attention, N_V x N_V `.npy` (attention methods).
    #[arg(long)]
    attention: Option<PathBuf>,
    /// Row of the [CLS] token in the attention matrix.
    #[arg(long)]
    cls_index: Option<usize>,
    /// Share of the attention pool kept by the MI round.
    #[arg(long, default_value_t = miprune_core::baselines::DEFAULT_ROUND1_FRACTION, value_parser = fraction)]
    round1_fraction: f64,
    /// Include score/select timings (makes output run-dependent).
    #[arg(long)]
    timing: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ScoreArgs {
    visual: PathBuf,
    text: PathBuf,
    #[command(flatten)]
    config: ConfigArgs,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    /// Comma-separated N_V values.
    #[arg(long, value_delimiter = ',', default_values_t = [2048usize, 16384])]
    sizes: Vec<usize>,
    /// Comma-separated budgets.
    #[arg(long, alias = "budget", value_delimiter = ',', default_values_t = [64usize])]
    budgets: Vec<usize>,
    /// Timed runs per cell.
    #[arg(long, default_value_t = 30, value_parser = clap::value_parser!(u64).range(1..))]
    repeats: u64,
    /// Untimed runs before timing.
    #[arg(long, default_value_t = 10)]
    warmup: usize,
    /// Comma-separated: fast_modular, greedy.
    #[arg(long, value_delimiter = ',', default_values_t = ["fast_modular".to_string(), "greedy".to_string()])]
    methods: Vec<String>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    /// Random instances per identity (submodularity runs a tenth as many).
    #[arg(long, default_value_t = 10_000)]
    trials: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Corrupt one chain-rule check to exercise the failure path.
    #[arg(long, hide = true)]
    inject_fault: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct MaskArgs {
    /// JSON written by `select`.
    kept: PathBuf,
    /// Token grid as HxW, e.g. 24x24.
    #[arg(long, value_parser = grid)]
    grid: (usize, usize),
    #[arg(long, value_enum, default_value_t = MaskFormat::Json)]
    format: MaskFormat,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long, default_value_t = 7)]
    seed: u64,
    /// Comma-separated budgets.
    #[arg(long, alias = "budget", value_delimiter = ',', default_values_t = [48usize])]
    budgets: Vec<usize>,
    /// Comma-separated subset of random, similarity, attention, mi, mi_attention.
    #[arg(long, value_delimiter = ',')]
    methods: Option<Vec<String>>,
    #[arg(long, default_value_t = 576)]
    n_visual: usize,
    #[arg(long, default_value_t = 8)]
    n_text: usize,
    #[arg(long, default_value_t = 64)]
    dim: usize,
    #[arg(long, default_value_t = 24)]
    n_planted: usize,
    #[arg(long, default_value_t = 12)]
    n_background_clusters: usize,
    #[arg(long, default_value_t = 0.15)]
    cluster_spread: f64,
    #[arg(long, default_value_t = 0.25)]
    distractor_fraction: f64,
    /// Write 0 in the wall_time_ns column so the CSV is reproducible.
    #[arg(long)]
    omit_timing: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Applies `MIPRUNE_THREADS` (0 or unset: one thread per core).
fn configure_threads() -> Result<(), String> {
    let Ok(raw) = std::env::var("MIPRUNE_THREADS") else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .map_err(|_| format!("MIPRUNE_THREADS must be a non-negative integer, got {raw:?}"))?;
    if n > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| e.to_string())?;
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Err(msg) = configure_threads() {
        eprintln!("error: {msg}");
        return ExitCode::from(EXIT_USAGE);
    }
    let outcome = match cli.command {
        Command::Select(a) => commands::select(a),
        Command::Score(a) => commands::score(a),
        Command::Bench(a) => commands::bench(a),
        Command::Verify(a) => commands::verify(a),
        Command::Mask(a) => commands::mask(a),
        Command::Synth(a) => commands::synth(a),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message);
            ExitCode::from(e.code)
        }
    }
}
