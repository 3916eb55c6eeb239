//! Run-directory bookkeeping: atomic writes and effective-config records.

use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Serialize;

/// Environment variable naming the root under which relative output paths
/// are placed.
pub const RUN_ROOT_ENV: &str = "SQA_RUN_ROOT";

/// Resolves an output path against `SQA_RUN_ROOT` when it is relative.
pub fn resolve_out(path: &Path) -> PathBuf {
    if path.is_absolute() {
        return path.into();
    }
    match std::env::var_os(RUN_ROOT_ENV) {
        Some(root) if !root.is_empty() => PathBuf::from(root).join(path),
        _ => path.into(),
    }
}

/// Writes bytes via a temp file + rename so partially-written outputs never
/// land under their final name.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)
                .with_context(|| format!("creating {}", parent.display()))?;
        }
    }
    let tmp = path.with_extension("tmp");
    std::fs::write(&tmp, bytes).with_context(|| format!("writing {}", tmp.display()))?;
    std::fs::rename(&tmp, path)
        .with_context(|| format!("moving {} into place", path.display()))?;
    Ok(())
}

/// Serializes records as line-delimited JSON.
pub fn write_jsonl<T: Serialize>(path: &Path, records: &[T]) -> Result<()> {
    let mut out = String::new();
    for r in records {
        out.push_str(&serde_json::to_string(r)?);
        out.push('\n');
    }
    write_atomic(path, out.as_bytes())
}

pub fn write_json_pretty<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_atomic(path, text.as_bytes())
}

/// Records the merged effective configuration of a run, with tool and
/// format versions, so the run can be replayed exactly.
pub fn record_config<T: Serialize>(dir: &Path, command: &str, effective: &T) -> Result<()> {
    let record = serde_json::json!({
        "command": command,
        "tool_version": env!("CARGO_PKG_VERSION"),
        "formats": {"feat": 1, "cdbk": 1, "tnsr": 1},
        "config": effective,
    });
    write_json_pretty(&dir.join("config.json"), &record)
}
