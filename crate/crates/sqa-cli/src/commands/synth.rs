use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::Args;

use sqa_core::dataset::{gen_synthetic_task, SynthConfig};

use crate::config::{pick, FileConfig};
use crate::report;

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Output dataset directory.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Number of training examples.
    #[arg(long)]
    pub train: Option<usize>,
    /// Number of dev examples.
    #[arg(long)]
    pub dev: Option<usize>,
    #[arg(long)]
    pub vocab_words: Option<usize>,
    #[arg(long)]
    pub units_per_word: Option<usize>,
    /// Unit alphabet size (anchor count).
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long)]
    pub passage_words: Option<usize>,
    #[arg(long)]
    pub answer_words: Option<usize>,
    #[arg(long)]
    pub repeat_min: Option<u32>,
    #[arg(long)]
    pub repeat_max: Option<u32>,
    #[arg(long)]
    pub noise_sigma: Option<f64>,
    #[arg(long)]
    pub dim: Option<usize>,
    #[arg(long)]
    pub zipf_exponent: Option<f64>,
    #[arg(long)]
    pub frame_period_us: Option<u32>,
}

pub fn run(args: SynthArgs, file: &FileConfig) -> Result<()> {
    let f = &file.synth;
    let d = SynthConfig::default();
    let cfg = SynthConfig {
        vocab_words: pick(args.vocab_words, f.vocab_words, d.vocab_words),
        units_per_word: pick(args.units_per_word, f.units_per_word, d.units_per_word),
        k: pick(args.k, f.k, d.k),
        n_train: pick(args.train, f.train, d.n_train),
        n_dev: pick(args.dev, f.dev, d.n_dev),
        passage_words: pick(args.passage_words, f.passage_words, d.passage_words),
        answer_words: pick(args.answer_words, f.answer_words, d.answer_words),
        repeat_min: pick(args.repeat_min, f.repeat_min, d.repeat_min),
        repeat_max: pick(args.repeat_max, f.repeat_max, d.repeat_max),
        noise_sigma: pick(args.noise_sigma, f.noise_sigma, d.noise_sigma),
        dim: pick(args.dim, f.dim, d.dim),
        seed: pick(args.seed, f.seed, d.seed),
        zipf_exponent: pick(args.zipf_exponent, f.zipf_exponent, d.zipf_exponent),
        frame_period_us: pick(args.frame_period_us, f.frame_period_us, d.frame_period_us),
    };

    let out_dir = report::resolve_out(&args.out);
    std::fs::create_dir_all(&out_dir)
        .with_context(|| format!("creating {}", out_dir.display()))?;
    let output = gen_synthetic_task(&cfg, &out_dir).context("generating synthetic task")?;
    report::record_config(&out_dir, "synth", &cfg)?;
    println!(
        "wrote {} train / {} dev examples under {}",
        cfg.n_train,
        cfg.n_dev,
        out_dir.display()
    );
    println!("  train manifest: {}", output.train_manifest.display());
    println!("  dev manifest:   {}", output.dev_manifest.display());
    Ok(())
}
