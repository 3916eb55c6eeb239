use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::Args;

use sqa_core::cascade::{bucket_analysis, BucketExample};

use crate::config::FileConfig;
use crate::plot::{line_chart, Series};
use crate::report::{record_config, resolve_out, write_atomic, write_jsonl};

#[derive(Debug, Args)]
pub struct BucketsArgs {
    /// Per-example report from `sqa eval` (the textless system).
    #[arg(long)]
    pub dual_report: PathBuf,
    /// Per-example report from `sqa cascade`.
    #[arg(long)]
    pub cascade_report: PathBuf,
    /// Comma-separated WER bucket edges, e.g. "0,0.1,0.2,...,0.7".
    #[arg(long)]
    pub edges: Option<String>,
    /// Run directory.
    #[arg(long)]
    pub out: PathBuf,
    /// Also write the WER curve SVG.
    #[arg(long, default_value_t = false)]
    pub plot: bool,
}

fn load_field_map(path: &Path, fields: &[&str]) -> Result<BTreeMap<String, Vec<f64>>> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading report {}", path.display()))?;
    let mut out = BTreeMap::new();
    for (lineno, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let v: serde_json::Value = serde_json::from_str(line)
            .with_context(|| format!("{}:{}", path.display(), lineno + 1))?;
        let id = v
            .get("id")
            .and_then(|x| x.as_str())
            .with_context(|| format!("{}:{}: missing id", path.display(), lineno + 1))?
            .to_string();
        let mut values = Vec::with_capacity(fields.len());
        for f in fields {
            values.push(v.get(*f).and_then(|x| x.as_f64()).with_context(|| {
                format!("{}:{}: missing field {f}", path.display(), lineno + 1)
            })?);
        }
        out.insert(id, values);
    }
    Ok(out)
}

pub fn run(args: BucketsArgs, file: &FileConfig) -> Result<()> {
    let edges_text = args
        .edges
        .clone()
        .or_else(|| file.buckets.edges.clone())
        .unwrap_or_else(|| "0,0.1,0.2,0.3,0.4,0.5,0.6,0.7".to_string());
    let edges: Vec<f64> = edges_text
        .split(',')
        .map(|s| s.trim().parse::<f64>().with_context(|| format!("bad edge {s:?}")))
        .collect::<Result<_>>()?;

    let dual = load_field_map(&args.dual_report, &["ff1"])?;
    let cascade = load_field_map(&args.cascade_report, &["realized_wer", "ff1"])?;
    if cascade.is_empty() {
        bail!("cascade report {} is empty", args.cascade_report.display());
    }
    let mut examples = Vec::with_capacity(cascade.len());
    let mut missing = Vec::new();
    for (id, vals) in &cascade {
        match dual.get(id) {
            Some(d) => examples.push(BucketExample {
                realized_wer: vals[0],
                ff1_cascade: vals[1],
                ff1_dual: d[0],
            }),
            None => missing.push(id.clone()),
        }
    }
    if !missing.is_empty() {
        bail!(
            "{} cascade ids missing from the dual report (first few: {:?})",
            missing.len(),
            &missing[..missing.len().min(5)]
        );
    }

    let rows = bucket_analysis(&examples, &edges)?;
    let out_dir = resolve_out(&args.out);
    std::fs::create_dir_all(&out_dir)?;
    write_jsonl(&out_dir.join("buckets.jsonl"), &rows)?;
    if args.plot {
        let mid = |r: &sqa_core::cascade::BucketRow| 0.5 * (r.lo + r.hi);
        let svg = line_chart(
            "FF1 by realized WER bucket",
            "WER",
            "FF1",
            &[
                Series {
                    name: "cascade",
                    color: "#d64541",
                    points: rows.iter().map(|r| (mid(r), r.ff1_cascade)).collect(),
                },
                Series {
                    name: "textless",
                    color: "#2574a9",
                    points: rows.iter().map(|r| (mid(r), r.ff1_dual)).collect(),
                },
            ],
        );
        write_atomic(&out_dir.join("buckets.svg"), svg.as_bytes())?;
    }
    record_config(
        &out_dir,
        "buckets",
        &serde_json::json!({
            "dual_report": args.dual_report.display().to_string(),
            "cascade_report": args.cascade_report.display().to_string(),
            "edges": edges,
            "n_examples": examples.len(),
        }),
    )?;

    println!("bucket     n   cascade   textless");
    for r in &rows {
        println!(
            "{:>4.0}-{:<3.0}% {:>4}    {:.4}    {:.4}",
            r.lo * 100.0,
            r.hi * 100.0,
            r.n,
            r.ff1_cascade,
            r.ff1_dual
        );
    }
    println!("  report: {}", out_dir.join("buckets.jsonl").display());
    Ok(())
}
