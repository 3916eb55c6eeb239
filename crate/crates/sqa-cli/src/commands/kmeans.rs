use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::Args;
use serde::Serialize;

use sqa_core::featio::read_features;
use sqa_core::quantizer::{train_codebook, write_codebook};

use crate::config::{pick, FileConfig};
use crate::report;

#[derive(Debug, Args)]
pub struct KmeansArgs {
    /// Feature file globs (e.g. "data/features/*_p.feat"). Repeatable.
    #[arg(long, required = true, num_args = 1..)]
    pub features: Vec<String>,
    /// Output codebook file.
    #[arg(long)]
    pub out: PathBuf,
    /// Number of clusters.
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long)]
    pub max_iters: Option<usize>,
    #[arg(long)]
    pub rel_tol: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Cap on training frames; selects an even deterministic stride over
    /// the concatenated input. Omit to use every frame.
    #[arg(long)]
    pub max_frames: Option<usize>,
}

#[derive(Serialize)]
struct Effective {
    features: Vec<String>,
    matched_files: usize,
    k: usize,
    max_iters: usize,
    rel_tol: f64,
    seed: u64,
    max_frames: Option<usize>,
    trained_frames: usize,
    train_inertia: f64,
}

pub fn run(args: KmeansArgs, file: &FileConfig) -> Result<()> {
    let f = &file.kmeans;
    let k = pick(args.k, f.k, 64);
    let max_iters = pick(args.max_iters, f.max_iters, 100);
    let rel_tol = pick(args.rel_tol, f.rel_tol, 1e-6);
    let seed = pick(args.seed, f.seed, 0);
    let max_frames = args.max_frames.or(f.max_frames);

    let mut paths: Vec<PathBuf> = Vec::new();
    for pattern in &args.features {
        let matched: Vec<PathBuf> = glob::glob(pattern)
            .with_context(|| format!("bad glob {pattern:?}"))?
            .collect::<std::result::Result<_, _>>()
            .context("expanding glob")?;
        paths.extend(matched);
    }
    paths.sort();
    paths.dedup();
    if paths.is_empty() {
        bail!("no feature files matched {:?}", args.features);
    }

    let mut matrices = Vec::with_capacity(paths.len());
    for p in &paths {
        matrices.push(read_features(p).with_context(|| format!("reading {}", p.display()))?);
    }
    let total_frames: usize = matrices.iter().map(|m| m.n_frames()).sum();
    let matrices = match max_frames {
        Some(cap) if cap < total_frames => subsample(&matrices, cap)?,
        _ => matrices,
    };
    let trained_frames: usize = matrices.iter().map(|m| m.n_frames()).sum();

    let cb = train_codebook(&matrices, k, max_iters, rel_tol, seed)
        .context("training codebook")?;

    let out = report::resolve_out(&args.out);
    if let Some(parent) = out.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)?;
        }
    }
    write_codebook(&cb, &out).context("writing codebook")?;
    let effective = Effective {
        features: args.features.clone(),
        matched_files: paths.len(),
        k,
        max_iters,
        rel_tol,
        seed,
        max_frames,
        trained_frames,
        train_inertia: cb.train_inertia(),
    };
    let cfg_path = out.with_extension("cdbk.config.json");
    report::write_json_pretty(
        &cfg_path,
        &serde_json::json!({
            "command": "kmeans",
            "tool_version": env!("CARGO_PKG_VERSION"),
            "config": effective,
        }),
    )?;
    println!(
        "trained K={k} codebook on {trained_frames} frames from {} files; inertia {:.4}",
        paths.len(),
        cb.train_inertia()
    );
    println!("  codebook: {}", out.display());
    Ok(())
}

/// Even-stride frame subsample, deterministic in the file order.
fn subsample(
    matrices: &[sqa_core::FeatureMatrix],
    cap: usize,
) -> Result<Vec<sqa_core::FeatureMatrix>> {
    let total: usize = matrices.iter().map(|m| m.n_frames()).sum();
    let dim = matrices.first().map(|m| m.dim()).unwrap_or(1);
    let period = matrices
        .first()
        .map(|m| m.frame_period_us())
        .unwrap_or(20_000);
    let mut data = Vec::with_capacity(cap * dim);
    let mut kept = 0usize;
    let mut global = 0usize;
    for m in matrices {
        for frame in m.frames() {
            // Evenly spaced selection: keep while kept/cap <= global/total.
            if kept * total <= global * cap && kept < cap {
                data.extend_from_slice(frame);
                kept += 1;
            }
            global += 1;
        }
    }
    Ok(vec![sqa_core::FeatureMatrix::new(kept, dim, period, data)?])
}
