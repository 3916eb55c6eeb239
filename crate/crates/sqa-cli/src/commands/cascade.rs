use std::collections::BTreeSet;
use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::Args;
use rayon::prelude::*;
use serde::Serialize;

use sqa_core::cascade::{corrupt, oracle_qa, NoiseSpec, TimedTranscript};
use sqa_core::dataset::read_manifest_records;
use sqa_core::metrics::{aos, ff1, wer};
use sqa_core::units::TimeSpan;

use crate::config::{pick, FileConfig};
use crate::report::{record_config, resolve_out, write_json_pretty, write_jsonl};

#[derive(Debug, Args)]
pub struct CascadeArgs {
    /// Manifest with transcripts and answer phrases.
    #[arg(long)]
    pub manifest: PathBuf,
    /// Run directory.
    #[arg(long)]
    pub out: PathBuf,
    /// Single corruption level for every example.
    #[arg(long)]
    pub target_wer: Option<f64>,
    /// Spread corruption levels evenly across "lo:hi" (e.g. "0:0.7");
    /// overrides --target-wer.
    #[arg(long)]
    pub wer_range: Option<String>,
    #[arg(long)]
    pub p_sub: Option<f64>,
    #[arg(long)]
    pub p_del: Option<f64>,
    #[arg(long)]
    pub p_ins: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Frame period for FF1 rasterization, microseconds.
    #[arg(long)]
    pub frame_period_us: Option<u32>,
}

#[derive(Serialize)]
struct CascadeRow {
    id: String,
    target_wer: f64,
    realized_wer: f64,
    ff1: f64,
    aos: f64,
    pred_start: f64,
    pred_end: f64,
}

pub fn run(args: CascadeArgs, file: &FileConfig) -> Result<()> {
    let f = &file.cascade;
    let seed = pick(args.seed, f.seed, 0);
    let p_sub = pick(args.p_sub, f.p_sub, 0.5);
    let p_del = pick(args.p_del, f.p_del, 0.25);
    let p_ins = pick(args.p_ins, f.p_ins, 0.25);
    let frame_period_us = pick(args.frame_period_us, f.frame_period_us, 20_000);
    let frame_period = frame_period_us as f64 * 1e-6;
    let wer_range = args.wer_range.clone().or_else(|| f.wer_range.clone());
    let target_wer = pick(args.target_wer, f.target_wer, 0.3);

    let range: Option<(f64, f64)> = match &wer_range {
        Some(s) => {
            let (lo, hi) = s
                .split_once(':')
                .with_context(|| format!("--wer-range {s:?} must be lo:hi"))?;
            Some((lo.trim().parse()?, hi.trim().parse()?))
        }
        None => None,
    };

    let records = read_manifest_records(&args.manifest)?;
    if records.is_empty() {
        bail!("manifest {} has no examples", args.manifest.display());
    }
    // Corruption vocabulary: every word seen in any transcript.
    let mut vocab: BTreeSet<String> = BTreeSet::new();
    for r in &records {
        let t = r.transcript.as_ref().with_context(|| {
            format!("example {} has no transcript; the cascade needs alignments", r.id)
        })?;
        vocab.extend(t.iter().map(|w| w.text.clone()));
        if r.answer_text.is_none() {
            bail!("example {} has no answer_text; the cascade needs the phrase", r.id);
        }
    }
    let vocabulary: Vec<String> = vocab.into_iter().collect();

    let n = records.len();
    let rows: Vec<Result<CascadeRow>> = records
        .par_iter()
        .enumerate()
        .map(|(i, r)| {
            let target = match range {
                Some((lo, hi)) => lo + (hi - lo) * (i as f64 + 0.5) / n as f64,
                None => target_wer,
            };
            let transcript = TimedTranscript::new(r.transcript.clone().expect("checked"))?;
            let spec = NoiseSpec {
                target_wer: target,
                p_sub,
                p_del,
                p_ins,
                vocabulary: vocabulary.clone(),
                seed: seed
                    .wrapping_mul(0x9e3779b97f4a7c15)
                    .wrapping_add(i as u64),
            };
            let noisy = corrupt(&transcript, &spec)?;
            let realized = wer(&transcript.texts(), &noisy.texts())?;
            let phrase = r.answer_text.clone().expect("checked");
            let pred = oracle_qa(&noisy, &phrase)?;
            let gold = TimeSpan::new(r.answer.start_sec, r.answer.end_sec)?;
            Ok(CascadeRow {
                id: r.id.clone(),
                target_wer: target,
                realized_wer: realized,
                ff1: ff1(&pred, &gold, frame_period),
                aos: aos(&pred, &gold),
                pred_start: pred.start,
                pred_end: pred.end,
            })
        })
        .collect();
    let rows: Vec<CascadeRow> = rows.into_iter().collect::<Result<_>>()?;

    let out_dir = resolve_out(&args.out);
    std::fs::create_dir_all(&out_dir)?;
    write_jsonl(&out_dir.join("cascade.jsonl"), &rows)?;
    let mean = |sel: fn(&CascadeRow) -> f64| rows.iter().map(sel).sum::<f64>() / rows.len() as f64;
    write_json_pretty(
        &out_dir.join("summary.json"),
        &serde_json::json!({
            "n_examples": rows.len(),
            "mean_realized_wer": mean(|r| r.realized_wer),
            "ff1_macro": mean(|r| r.ff1),
            "aos_macro": mean(|r| r.aos),
            "frame_period": frame_period,
        }),
    )?;
    record_config(
        &out_dir,
        "cascade",
        &serde_json::json!({
            "manifest": args.manifest.display().to_string(),
            "seed": seed,
            "target_wer": target_wer,
            "wer_range": wer_range,
            "p_sub": p_sub,
            "p_del": p_del,
            "p_ins": p_ins,
            "frame_period_us": frame_period_us,
        }),
    )?;
    println!(
        "cascade over {} examples: mean realized WER {:.3}, FF1 {:.4}, AOS {:.4}",
        rows.len(),
        mean(|r| r.realized_wer),
        mean(|r| r.ff1),
        mean(|r| r.aos)
    );
    println!("  report: {}", out_dir.join("cascade.jsonl").display());
    Ok(())
}
