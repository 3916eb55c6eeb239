//! Optional TOML configuration. Each section mirrors one subcommand's flags;
//! explicit command-line flags always win.

use std::path::Path;

use anyhow::{Context, Result};
use serde::Deserialize;

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    #[serde(default)]
    pub synth: SynthSection,
    #[serde(default)]
    pub kmeans: KmeansSection,
    #[serde(default)]
    pub train: TrainSection,
    #[serde(default)]
    pub eval: EvalSection,
    #[serde(default)]
    pub cascade: CascadeSection,
    #[serde(default)]
    pub buckets: BucketsSection,
}

impl FileConfig {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        match path {
            None => Ok(FileConfig::default()),
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .with_context(|| format!("reading config {}", p.display()))?;
                toml::from_str(&text).with_context(|| format!("parsing config {}", p.display()))
            }
        }
    }
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthSection {
    pub seed: Option<u64>,
    pub train: Option<usize>,
    pub dev: Option<usize>,
    pub vocab_words: Option<usize>,
    pub units_per_word: Option<usize>,
    pub k: Option<usize>,
    pub passage_words: Option<usize>,
    pub answer_words: Option<usize>,
    pub repeat_min: Option<u32>,
    pub repeat_max: Option<u32>,
    pub noise_sigma: Option<f64>,
    pub dim: Option<usize>,
    pub zipf_exponent: Option<f64>,
    pub frame_period_us: Option<u32>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KmeansSection {
    pub k: Option<usize>,
    pub max_iters: Option<usize>,
    pub rel_tol: Option<f64>,
    pub seed: Option<u64>,
    pub max_frames: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainSection {
    pub seed: Option<u64>,
    pub layers: Option<usize>,
    pub model_dim: Option<usize>,
    pub heads: Option<usize>,
    pub ffn_dim: Option<usize>,
    pub local_window: Option<usize>,
    pub max_len: Option<usize>,
    pub dropout: Option<f64>,
    pub peak_lr: Option<f64>,
    pub warmup: Option<usize>,
    pub steps: Option<usize>,
    pub batch_size: Option<usize>,
    pub eval_every: Option<usize>,
    pub weight_decay: Option<f64>,
    pub grad_clip: Option<f64>,
    pub max_answer_len: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalSection {
    pub max_answer_len: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CascadeSection {
    pub seed: Option<u64>,
    pub target_wer: Option<f64>,
    pub wer_range: Option<String>,
    pub p_sub: Option<f64>,
    pub p_del: Option<f64>,
    pub p_ins: Option<f64>,
    pub frame_period_us: Option<u32>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BucketsSection {
    pub edges: Option<String>,
}

/// Flag > config > default.
pub fn pick<T: Copy>(flag: Option<T>, file: Option<T>, default: T) -> T {
    flag.or(file).unwrap_or(default)
}
