//! `pggp`: train and evaluate PG-augmented GP classifiers on embedding data.
//!
//! Exit codes: 0 success, 1 runtime or data failure, 2 usage error.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use pggp_core::dataio::Generator;
use pggp_core::{KernelFamily, Trainable};

#[derive(Debug, Parser)]
#[command(
    name = "pggp",
    version,
    about = "Polya-Gamma augmented GP classification"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write a synthetic JSON-lines dataset.
    Synth(SynthArgs),
    /// Fit a model and write it as JSON.
    Train(TrainArgs),
    /// Score a dataset with a fitted model and report metrics.
    Eval(EvalArgs),
    /// Check the Polya-Gamma sampler moments and augmentation identity.
    PgSelftest(PgSelftestArgs),
    /// Run all numerical self checks.
    Selftest(SelftestArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum GeneratorArg {
    Blobs,
    TwoMoons,
    RankingGroups,
}

impl From<GeneratorArg> for Generator {
    fn from(g: GeneratorArg) -> Self {
        match g {
            GeneratorArg::Blobs => Generator::Blobs,
            GeneratorArg::TwoMoons => Generator::TwoMoons,
            GeneratorArg::RankingGroups => Generator::RankingGroups,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum KernelArg {
    Rbf,
    Linear,
    Matern52,
}

impl From<KernelArg> for KernelFamily {
    fn from(k: KernelArg) -> Self {
        match k {
            KernelArg::Rbf => KernelFamily::Rbf,
            KernelArg::Linear => KernelFamily::Linear,
            KernelArg::Matern52 => KernelFamily::Matern52,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum TrainableArg {
    None,
    KernelParams,
}

impl From<TrainableArg> for Trainable {
    fn from(t: TrainableArg) -> Self {
        match t {
            TrainableArg::None => Trainable::None,
            TrainableArg::KernelParams => Trainable::KernelParams,
        }
    }
}

#[derive(Debug, Args)]
struct SynthArgs {
    #[arg(long, value_enum)]
    generator: GeneratorArg,
    /// Records, or groups for ranking-groups.
    #[arg(long)]
    n: usize,
    #[arg(long, default_value_t = 2)]
    dim: usize,
    /// Defaults to 1.0 for blobs and 0.2 otherwise.
    #[arg(long)]
    noise: Option<f64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct TrainArgs {
    /// JSON run configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Per-batch JSON-lines log.
    #[arg(long)]
    log: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_enum)]
    kernel: Option<KernelArg>,
    #[arg(long)]
    length_scale: Option<f64>,
    #[arg(long)]
    output_scale: Option<f64>,
    #[arg(long)]
    jitter: Option<f64>,
    #[arg(long)]
    n_chains: Option<usize>,
    #[arg(long)]
    n_steps: Option<usize>,
    #[arg(long)]
    learning_rate: Option<f64>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long, value_enum)]
    trainable: Option<TrainableArg>,
    #[arg(long)]
    reference_size: Option<usize>,
}

#[derive(Debug, Args)]
struct EvalArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    model: Option<PathBuf>,
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long)]
    metrics_out: Option<PathBuf>,
    /// Reliability diagram bins as CSV.
    #[arg(long)]
    reliability_out: Option<PathBuf>,
    /// Per-item predictions as JSON lines.
    #[arg(long)]
    predictions_out: Option<PathBuf>,
    #[arg(long)]
    n_bins: Option<usize>,
    /// Compute ECE over each group's top-ranked item only.
    #[arg(long)]
    restrict_rank1: bool,
    #[arg(long)]
    quadrature_nodes: Option<usize>,
}

#[derive(Debug, Args)]
struct PgSelftestArgs {
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Debug, Args)]
struct SelftestArgs {
    /// Skip the long-run Gibbs comparison.
    #[arg(long)]
    quick: bool,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, hide = true, default_value_t = 0.0)]
    inject_pg_bias: f64,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Synth(a) => commands::synth(a),
        Command::Train(a) => commands::train(a),
        Command::Eval(a) => commands::eval(a),
        Command::PgSelftest(a) => commands::pg_selftest(a),
        Command::Selftest(a) => commands::selftest(a),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<commands::UsageError>().is_some() {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}
