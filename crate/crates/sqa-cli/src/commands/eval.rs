use std::collections::BTreeMap;
use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::Args;
use rayon::prelude::*;
use serde::Serialize;

use sqa_core::metrics::evaluate;
use sqa_core::model::{decode_span, forward, load_checkpoint};
use sqa_core::quantizer::read_codebook;
use sqa_core::units::TimeSpan;

use crate::config::{pick, FileConfig};
use crate::plot;
use crate::report::{record_config, resolve_out, write_atomic, write_json_pretty, write_jsonl};

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long)]
    pub codebook: PathBuf,
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Run directory.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub max_answer_len: Option<usize>,
    /// Also write an FF1 histogram SVG.
    #[arg(long, default_value_t = false)]
    pub plot: bool,
}

#[derive(Serialize)]
struct EvalRow {
    id: String,
    ff1: f64,
    aos: f64,
    pred_start: f64,
    pred_end: f64,
    gold_start: f64,
    gold_end: f64,
}

pub fn run(args: EvalArgs, file: &FileConfig) -> Result<()> {
    let max_answer_len = pick(args.max_answer_len, file.eval.max_answer_len, 64);
    let cb = read_codebook(&args.codebook)
        .with_context(|| format!("reading codebook {}", args.codebook.display()))?;
    let ckpt = load_checkpoint(&args.checkpoint)
        .with_context(|| format!("loading checkpoint {}", args.checkpoint.display()))?;
    let cfg = ckpt.params.cfg;
    if cb.k() > cfg.unit_count() {
        bail!(
            "codebook/model mismatch: {} clusters vs {} unit embeddings",
            cb.k(),
            cfg.unit_count()
        );
    }

    let (prepared, _) = super::load_prepared(&args.manifest, &cb, &cfg)?;
    if prepared.is_empty() {
        bail!("manifest {} has no examples", args.manifest.display());
    }
    let frame_period = prepared[0].passage.frame_period();

    let decoded: Vec<Result<(String, TimeSpan, TimeSpan)>> = prepared
        .par_iter()
        .map(|ex| {
            let (start, end) = forward(&ckpt.params, &ex.input)?;
            let tok = decode_span(&start, &end, ex.input.passage_mask(), max_answer_len)?;
            let pred = ex.token_span_to_time(&tok)?;
            Ok((ex.id.clone(), pred, ex.gold))
        })
        .collect();

    let mut predictions = BTreeMap::new();
    let mut golds = BTreeMap::new();
    for item in decoded {
        let (id, pred, gold) = item?;
        predictions.insert(id.clone(), pred);
        golds.insert(id, gold);
    }
    let result = evaluate(&predictions, &golds, frame_period)?;

    let out_dir = resolve_out(&args.out);
    std::fs::create_dir_all(&out_dir)?;
    let rows: Vec<EvalRow> = result
        .per_example
        .iter()
        .map(|s| {
            let pred = predictions[&s.id];
            let gold = golds[&s.id];
            EvalRow {
                id: s.id.clone(),
                ff1: s.ff1,
                aos: s.aos,
                pred_start: pred.start,
                pred_end: pred.end,
                gold_start: gold.start,
                gold_end: gold.end,
            }
        })
        .collect();
    write_jsonl(&out_dir.join("eval.jsonl"), &rows)?;
    write_json_pretty(
        &out_dir.join("summary.json"),
        &serde_json::json!({
            "n_examples": result.n_examples,
            "n_missing": result.n_missing,
            "ff1_macro": result.ff1_macro,
            "aos_macro": result.aos_macro,
            "ff1_micro": result.ff1_micro,
            "aos_micro": result.aos_micro,
            "frame_period": frame_period,
            "max_answer_len": max_answer_len,
        }),
    )?;
    if args.plot {
        let values: Vec<f64> = rows.iter().map(|r| r.ff1).collect();
        let svg = plot::histogram("FF1 distribution", "FF1", &values, 20);
        write_atomic(&out_dir.join("ff1_hist.svg"), svg.as_bytes())?;
    }
    record_config(
        &out_dir,
        "eval",
        &serde_json::json!({
            "manifest": args.manifest.display().to_string(),
            "codebook": args.codebook.display().to_string(),
            "checkpoint": args.checkpoint.display().to_string(),
            "max_answer_len": max_answer_len,
        }),
    )?;

    println!("evaluated {} examples", result.n_examples);
    println!("  metric     macro    micro");
    println!("  FF1       {:6.4}   {:6.4}", result.ff1_macro, result.ff1_micro);
    println!("  AOS       {:6.4}   {:6.4}", result.aos_macro, result.aos_micro);
    println!("  report: {}", out_dir.join("eval.jsonl").display());
    Ok(())
}
