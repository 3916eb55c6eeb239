pub mod buckets;
pub mod cascade;
pub mod eval;
pub mod kmeans;
pub mod synth;
pub mod train;

use anyhow::{bail, Context, Result};
use sqa_core::dataset::{load_manifest, prepare, PreparedExample};
use sqa_core::model::ModelConfig;
use sqa_core::quantizer::Codebook;
use std::path::Path;

/// Loads a manifest and prepares every example for the model. Inference
/// keeps everything; training drops examples whose target was truncated
/// away (reported via the second return).
pub fn load_prepared(
    manifest: &Path,
    cb: &Codebook,
    cfg: &ModelConfig,
) -> Result<(Vec<PreparedExample>, usize)> {
    if cb.k() > cfg.unit_count() {
        bail!(
            "codebook has {} clusters but the model reserves embedding rows for {}",
            cb.k(),
            cfg.unit_count()
        );
    }
    let examples = load_manifest(manifest, cb)
        .with_context(|| format!("loading manifest {}", manifest.display()))?;
    let mut prepared = Vec::with_capacity(examples.len());
    let mut dropped = 0;
    for e in &examples {
        let p = prepare(e, cfg).with_context(|| format!("preparing example {}", e.id))?;
        if p.dropped {
            dropped += 1;
        }
        prepared.push(p);
    }
    Ok((prepared, dropped))
}
