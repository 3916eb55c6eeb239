mod commands;
mod config;
mod plot;
mod report;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};

use crate::commands::{buckets, cascade, eval, kmeans, synth, train};

/// Textless spoken question answering pipeline: synthesize data, train a
/// unit codebook and span model, evaluate, and compare against a simulated
/// ASR+QA cascade.
#[derive(Parser)]
#[command(name = "sqa", version, about)]
struct Cli {
    /// Worker threads (0 = automatic). Changing this never changes results.
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,

    /// TOML config file; command-line flags override its values.
    #[arg(long, global = true)]
    config: Option<std::path::PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset (features, manifests, transcripts).
    Synth(synth::SynthArgs),
    /// Train a k-means unit codebook over feature files.
    Kmeans(kmeans::KmeansArgs),
    /// Train a span model (or pretrain with masked-unit prediction).
    Train(train::TrainArgs),
    /// Evaluate a checkpoint: decode spans and score FF1/AOS.
    Eval(eval::EvalArgs),
    /// Run the simulated cascade baseline over a manifest.
    Cascade(cascade::CascadeArgs),
    /// Bucket cascade and textless results by realized WER.
    Buckets(buckets::BucketsArgs),
}

fn main() {
    let cli = Cli::parse();
    if let Err(err) = run(cli) {
        eprintln!("error: {err:#}");
        std::process::exit(1);
    }
}

fn run(cli: Cli) -> Result<()> {
    if cli.threads > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(cli.threads)
            .build_global()
            .context("initializing thread pool")?;
    }
    let file_cfg = config::FileConfig::load(cli.config.as_deref())?;
    match cli.command {
        Command::Synth(args) => synth::run(args, &file_cfg),
        Command::Kmeans(args) => kmeans::run(args, &file_cfg),
        Command::Train(args) => train::run(args, &file_cfg),
        Command::Eval(args) => eval::run(args, &file_cfg),
        Command::Cascade(args) => cascade::run(args, &file_cfg),
        Command::Buckets(args) => buckets::run(args, &file_cfg),
    }
}
