use std::io::Write;
use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::Args;
use serde::Serialize;

use sqa_core::dataset::load_manifest;
use sqa_core::model::{
    build_finetune_params, frequency_ranking, load_checkpoint, save_checkpoint, EmbedStrategy,
    ModelConfig, ModelParams,
};
use sqa_core::quantizer::read_codebook;
use sqa_core::trainer::{pretrain_mlm, train, TrainConfig, TrainOutcome};

use crate::config::{pick, FileConfig};
use crate::report::{record_config, resolve_out};

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum ObjectiveArg {
    /// Span prediction (question + passage -> answer indices).
    Span,
    /// Masked-unit prediction over passages (donor pretraining).
    Mlm,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Training manifest.
    #[arg(long)]
    pub manifest: PathBuf,
    /// Validation manifest for model selection (span objective).
    #[arg(long)]
    pub val_manifest: Option<PathBuf>,
    /// Unit codebook.
    #[arg(long)]
    pub codebook: PathBuf,
    /// Run directory.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_enum, default_value_t = ObjectiveArg::Span)]
    pub objective: ObjectiveArg,
    /// Donor checkpoint to initialize from (span objective).
    #[arg(long)]
    pub donor: Option<PathBuf>,
    /// Embedding assignment strategy when a donor is given.
    #[arg(long)]
    pub assign: Option<String>,
    #[arg(long)]
    pub seed: Option<u64>,
    // Model shape.
    #[arg(long)]
    pub layers: Option<usize>,
    #[arg(long)]
    pub model_dim: Option<usize>,
    #[arg(long)]
    pub heads: Option<usize>,
    #[arg(long)]
    pub ffn_dim: Option<usize>,
    #[arg(long)]
    pub local_window: Option<usize>,
    #[arg(long)]
    pub max_len: Option<usize>,
    #[arg(long)]
    pub dropout: Option<f64>,
    // Optimization.
    #[arg(long)]
    pub peak_lr: Option<f64>,
    #[arg(long)]
    pub warmup: Option<usize>,
    #[arg(long)]
    pub steps: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub eval_every: Option<usize>,
    #[arg(long)]
    pub weight_decay: Option<f64>,
    #[arg(long)]
    pub grad_clip: Option<f64>,
    #[arg(long)]
    pub max_answer_len: Option<usize>,
}

#[derive(Serialize)]
struct Effective {
    objective: String,
    manifest: String,
    val_manifest: Option<String>,
    codebook: String,
    donor: Option<String>,
    assign: Option<String>,
    model: ModelConfig,
    train: TrainConfig,
    dropped_train_examples: usize,
}

pub fn run(args: TrainArgs, file: &FileConfig) -> Result<()> {
    let f = &file.train;
    let cb = read_codebook(&args.codebook)
        .with_context(|| format!("reading codebook {}", args.codebook.display()))?;
    let k = cb.k();

    let donor_ckpt = args
        .donor
        .as_ref()
        .map(|p| load_checkpoint(p).with_context(|| format!("loading donor {}", p.display())))
        .transpose()?;

    // Body shape comes from the donor when one is given.
    let model_cfg = if let Some(d) = &donor_ckpt {
        for (flag, name) in [
            (args.layers.is_some(), "--layers"),
            (args.model_dim.is_some(), "--model-dim"),
            (args.heads.is_some(), "--heads"),
            (args.ffn_dim.is_some(), "--ffn-dim"),
        ] {
            if flag {
                bail!("{name} conflicts with --donor; the donor fixes the body shape");
            }
        }
        let dc = d.params.cfg;
        ModelConfig {
            vocab_size: k + sqa_core::model::NUM_SPECIAL_TOKENS,
            max_len: pick(args.max_len, f.max_len, dc.max_len),
            local_window: pick(args.local_window, f.local_window, dc.local_window),
            dropout: pick(args.dropout, f.dropout, dc.dropout),
            ..dc
        }
    } else {
        let d = ModelConfig::for_units(k);
        ModelConfig {
            vocab_size: k + sqa_core::model::NUM_SPECIAL_TOKENS,
            max_len: pick(args.max_len, f.max_len, d.max_len),
            layers: pick(args.layers, f.layers, d.layers),
            model_dim: pick(args.model_dim, f.model_dim, d.model_dim),
            heads: pick(args.heads, f.heads, d.heads),
            ffn_dim: pick(args.ffn_dim, f.ffn_dim, d.ffn_dim),
            local_window: pick(args.local_window, f.local_window, d.local_window),
            dropout: pick(args.dropout, f.dropout, d.dropout),
        }
    };

    let dt = TrainConfig::default();
    let train_cfg = TrainConfig {
        peak_lr: pick(args.peak_lr, f.peak_lr, dt.peak_lr),
        warmup_steps: pick(args.warmup, f.warmup, dt.warmup_steps),
        total_steps: pick(args.steps, f.steps, dt.total_steps),
        batch_size: pick(args.batch_size, f.batch_size, dt.batch_size),
        seed: pick(args.seed, f.seed, dt.seed),
        weight_decay: pick(args.weight_decay, f.weight_decay, dt.weight_decay),
        grad_clip: pick(args.grad_clip, f.grad_clip, dt.grad_clip),
        eval_every: pick(args.eval_every, f.eval_every, dt.eval_every),
        max_answer_len: pick(args.max_answer_len, f.max_answer_len, dt.max_answer_len),
    };

    let out_dir = resolve_out(&args.out);
    std::fs::create_dir_all(&out_dir)?;
    let log_path = out_dir.join("train_log.jsonl");
    let tmp_log = log_path.with_extension("jsonl.tmp");
    let mut log_file =
        std::io::BufWriter::new(std::fs::File::create(&tmp_log).context("creating train log")?);

    let strategy: Option<EmbedStrategy> = args
        .assign
        .as_deref()
        .map(|s| s.parse())
        .transpose()
        .context("parsing --assign")?;

    let (outcome, dropped, unit_freqs) = match args.objective {
        ObjectiveArg::Span => {
            let (mut prepared, dropped) =
                super::load_prepared(&args.manifest, &cb, &model_cfg)?;
            if dropped > 0 {
                eprintln!("note: {dropped} training examples dropped (answer truncated away)");
            }
            prepared.retain(|p| !p.dropped);
            let train_inputs: Vec<_> = prepared.iter().map(|p| p.input.clone()).collect();
            let val = match &args.val_manifest {
                Some(m) => super::load_prepared(m, &cb, &model_cfg)?.0,
                None => Vec::new(),
            };

            let init = match (&donor_ckpt, strategy) {
                (None, None) | (None, Some(EmbedStrategy::Scratch)) => {
                    ModelParams::init(&model_cfg, train_cfg.seed)
                }
                (None, Some(s)) => bail!("--assign {s:?} requires --donor"),
                (Some(d), s) => {
                    let strategy = s.unwrap_or(EmbedStrategy::MostFrequent);
                    let ranking: Vec<u32> = d
                        .meta
                        .get("unit_freq_ranking")
                        .and_then(|v| serde_json::from_value(v.clone()).ok())
                        .unwrap_or_default();
                    build_finetune_params(
                        &model_cfg,
                        Some(&d.params),
                        &ranking,
                        strategy,
                        train_cfg.seed,
                    )?
                }
            };

            let unit_freqs = frequency_ranking(
                &train_inputs
                    .iter()
                    .map(|i| i.tokens().to_vec())
                    .collect::<Vec<_>>(),
                k,
            );
            let outcome = train(&train_inputs, &val, init, &train_cfg, |entry| {
                let _ = writeln!(log_file, "{}", serde_json::to_string(entry).unwrap());
            })?;
            (outcome, dropped, unit_freqs)
        }
        ObjectiveArg::Mlm => {
            if donor_ckpt.is_some() {
                bail!("--donor applies to the span objective only");
            }
            let examples = load_manifest(&args.manifest, &cb)?;
            let sequences: Vec<Vec<u32>> = examples
                .iter()
                .map(|e| e.passage.units().to_vec())
                .collect();
            let unit_freqs = frequency_ranking(&sequences, k);
            let init = ModelParams::init(&model_cfg, train_cfg.seed);
            let outcome: TrainOutcome =
                pretrain_mlm(&sequences, init, &train_cfg, |entry| {
                    let _ = writeln!(log_file, "{}", serde_json::to_string(entry).unwrap());
                })?;
            (outcome, 0, unit_freqs)
        }
    };

    log_file.flush()?;
    drop(log_file);
    std::fs::rename(&tmp_log, &log_path)?;

    let meta = serde_json::json!({
        "unit_freq_ranking": unit_freqs,
        "best_step": outcome.best_step,
        "best_ff1": outcome.best_ff1,
        "objective": match args.objective {
            ObjectiveArg::Span => "span",
            ObjectiveArg::Mlm => "mlm",
        },
    });
    let ckpt_path = out_dir.join("checkpoint.tnsr");
    save_checkpoint(&ckpt_path, &outcome.params, &meta, &[])?;

    let effective = Effective {
        objective: format!("{:?}", args.objective).to_lowercase(),
        manifest: args.manifest.display().to_string(),
        val_manifest: args.val_manifest.as_ref().map(|p| p.display().to_string()),
        codebook: args.codebook.display().to_string(),
        donor: args.donor.as_ref().map(|p| p.display().to_string()),
        assign: args.assign.clone(),
        model: model_cfg,
        train: train_cfg,
        dropped_train_examples: dropped,
    };
    record_config(&out_dir, "train", &effective)?;

    let last_loss = outcome.log.last().map(|l| l.loss).unwrap_or(f64::NAN);
    println!(
        "trained {} steps; final loss {last_loss:.4}",
        outcome.log.len()
    );
    if let Some(ff1) = outcome.best_ff1 {
        println!("  best validation FF1 {ff1:.4} at step {}", outcome.best_step);
    }
    println!("  checkpoint: {}", ckpt_path.display());
    Ok(())
}
