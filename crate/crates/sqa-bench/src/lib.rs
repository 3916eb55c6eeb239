//! Shared fixtures for the pipeline benchmarks.

use sqa_core::model::{ModelConfig, ModelInput, ModelParams};
use sqa_core::units::IndexSpan;

pub fn bench_model() -> (ModelParams, ModelInput) {
    let cfg = ModelConfig {
        vocab_size: 64 + 4,
        max_len: 128,
        layers: 2,
        model_dim: 64,
        heads: 4,
        ffn_dim: 256,
        local_window: 8,
        dropout: 0.0,
    };
    let params = ModelParams::init(&cfg, 7);
    let q_len = 6;
    let p_len = 60;
    let mut tokens = vec![64u32];
    tokens.extend((0..q_len).map(|i| (i * 7 % 64) as u32));
    tokens.push(65);
    let p_off = tokens.len();
    tokens.extend((0..p_len).map(|i| (i * 13 % 64) as u32));
    tokens.push(66);
    let n = tokens.len();
    let mut global = vec![false; n];
    for g in global.iter_mut().take(q_len + 1) {
        *g = true;
    }
    let mut passage = vec![false; n];
    for p in passage.iter_mut().skip(p_off).take(p_len) {
        *p = true;
    }
    let input = ModelInput::new(
        tokens,
        passage,
        global,
        Some(IndexSpan {
            start: p_off + 10,
            end: p_off + 13,
        }),
    )
    .unwrap();
    (params, input)
}
