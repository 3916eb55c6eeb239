//! Forward pass. Pre-norm residual blocks; each attention row is restricted
//! to a local window around the query plus the designated global positions,
//! and global queries attend everywhere.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::tensor::{dot, matmul};

use super::params::{LayerParams, ModelParams};
use super::{ModelConfig, ModelInput};

pub(crate) const LN_EPS: f64 = 1e-5;

const GELU_C: f64 = 0.7978845608028654; // sqrt(2/pi)
const GELU_A: f64 = 0.044715;

pub(crate) fn gelu(x: f64) -> f64 {
    let t = GELU_C * (x + GELU_A * x * x * x);
    0.5 * x * (1.0 + t.tanh())
}

pub(crate) fn gelu_prime(x: f64) -> f64 {
    let inner = GELU_C * (x + GELU_A * x * x * x);
    let th = inner.tanh();
    0.5 * (1.0 + th) + 0.5 * x * (1.0 - th * th) * GELU_C * (1.0 + 3.0 * GELU_A * x * x)
}

/// Attention row layout: the key positions each query may attend to.
pub(crate) fn allowed_keys(n: usize, window: usize, global_mask: &[bool]) -> Vec<Vec<usize>> {
    let globals: Vec<usize> = (0..n).filter(|&i| global_mask[i]).collect();
    (0..n)
        .map(|i| {
            if global_mask[i] {
                return (0..n).collect();
            }
            let lo = i.saturating_sub(window);
            let hi = (i + window).min(n - 1);
            let mut keys = Vec::with_capacity(hi - lo + 1 + globals.len());
            let mut g_iter = globals.iter().copied().peekable();
            // Merge the sorted globals with the window range.
            while let Some(&g) = g_iter.peek() {
                if g >= lo {
                    break;
                }
                keys.push(g);
                g_iter.next();
            }
            keys.extend(lo..=hi);
            for g in g_iter {
                if g > hi {
                    keys.push(g);
                }
            }
            keys
        })
        .collect()
}

/// Per-layer activations kept for the backward pass. `x_in` is retained for
/// layer-output inspection in tests.
pub(crate) struct LayerCache {
    #[allow(dead_code)]
    pub x_in: Vec<f64>,
    pub ln1_xhat: Vec<f64>,
    pub ln1_inv_std: Vec<f64>,
    pub q: Vec<f64>,
    pub k: Vec<f64>,
    pub v: Vec<f64>,
    /// probs[h][i] aligned with `allowed[i]`.
    pub probs: Vec<Vec<Vec<f64>>>,
    pub ctx: Vec<f64>,
    pub attn_drop: Option<Vec<f64>>,
    pub ln2_xhat: Vec<f64>,
    pub ln2_inv_std: Vec<f64>,
    pub ffn_pre: Vec<f64>,
    pub ffn_act: Vec<f64>,
    pub ffn_drop: Option<Vec<f64>>,
}

pub(crate) struct Cache {
    pub n: usize,
    pub allowed: Vec<Vec<usize>>,
    pub layers: Vec<LayerCache>,
    /// Input to the final layer norm.
    #[allow(dead_code)]
    pub x_last: Vec<f64>,
    pub lnf_xhat: Vec<f64>,
    pub lnf_inv_std: Vec<f64>,
    /// Final hidden states.
    pub hidden: Vec<f64>,
}

impl Cache {
    /// Hidden state rows after layer `l` (the input of layer `l + 1`).
    #[cfg(test)]
    pub(crate) fn layer_output(&self, l: usize) -> &[f64] {
        if l + 1 < self.layers.len() {
            &self.layers[l + 1].x_in
        } else {
            &self.x_last
        }
    }
}

fn layer_norm(
    x: &[f64],
    n: usize,
    d: usize,
    gain: &[f64],
    bias: &[f64],
) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let mut out = vec![0.0; n * d];
    let mut xhat = vec![0.0; n * d];
    let mut inv_stds = vec![0.0; n];
    for i in 0..n {
        let row = &x[i * d..(i + 1) * d];
        let mean = row.iter().sum::<f64>() / d as f64;
        let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / d as f64;
        let inv_std = 1.0 / (var + LN_EPS).sqrt();
        inv_stds[i] = inv_std;
        for j in 0..d {
            let h = (row[j] - mean) * inv_std;
            xhat[i * d + j] = h;
            out[i * d + j] = h * gain[j] + bias[j];
        }
    }
    (out, xhat, inv_stds)
}

fn add_bias(x: &mut [f64], bias: &[f64]) {
    let d = bias.len();
    for row in x.chunks_exact_mut(d) {
        for (v, &b) in row.iter_mut().zip(bias) {
            *v += b;
        }
    }
}

/// Inverted dropout: keep with probability 1-p and scale by 1/(1-p).
/// Returns the per-element scale mask.
fn dropout_mask(len: usize, p: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let keep_scale = 1.0 / (1.0 - p);
    (0..len)
        .map(|_| if rng.gen::<f64>() < p { 0.0 } else { keep_scale })
        .collect()
}

fn attention(
    cfg: &ModelConfig,
    q: &[f64],
    k: &[f64],
    v: &[f64],
    allowed: &[Vec<usize>],
    n: usize,
) -> (Vec<f64>, Vec<Vec<Vec<f64>>>) {
    let d = cfg.model_dim;
    let hd = cfg.head_dim();
    let scale = 1.0 / (hd as f64).sqrt();
    let mut ctx = vec![0.0; n * d];
    let mut probs: Vec<Vec<Vec<f64>>> = Vec::with_capacity(cfg.heads);
    for h in 0..cfg.heads {
        let off = h * hd;
        let mut head_probs: Vec<Vec<f64>> = Vec::with_capacity(n);
        for i in 0..n {
            let keys = &allowed[i];
            let q_i = &q[i * d + off..i * d + off + hd];
            let mut scores: Vec<f64> = keys
                .iter()
                .map(|&j| scale * dot(q_i, &k[j * d + off..j * d + off + hd]))
                .collect();
            let max = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let mut sum = 0.0;
            for s in &mut scores {
                *s = (*s - max).exp();
                sum += *s;
            }
            let ctx_i = &mut ctx[i * d + off..i * d + off + hd];
            for (p, &j) in scores.iter_mut().zip(keys) {
                *p /= sum;
                let v_j = &v[j * d + off..j * d + off + hd];
                for (c, &vv) in ctx_i.iter_mut().zip(v_j) {
                    *c += *p * vv;
                }
            }
            head_probs.push(scores);
        }
        probs.push(head_probs);
    }
    (ctx, probs)
}

/// Runs the encoder, returning the full activation cache. `dropout_rng`
/// enables training-mode dropout; `None` is deterministic evaluation.
pub(crate) fn forward_cache(
    params: &ModelParams,
    input: &ModelInput,
    mut dropout_rng: Option<&mut ChaCha8Rng>,
) -> Result<Cache> {
    let cfg = &params.cfg;
    cfg.validate()?;
    let n = input.len();
    let d = cfg.model_dim;
    if n == 0 {
        return Err(Error::Shape {
            context: "forward".into(),
            detail: "empty input".into(),
        });
    }
    if n > cfg.max_len {
        return Err(Error::Shape {
            context: "forward".into(),
            detail: format!("sequence length {n} exceeds max_len {}", cfg.max_len),
        });
    }
    for &t in input.tokens() {
        if t as usize >= cfg.vocab_size {
            return Err(Error::UnitOutOfRange {
                unit: t,
                alphabet: cfg.vocab_size,
            });
        }
    }

    let mut x = vec![0.0; n * d];
    for (i, &t) in input.tokens().iter().enumerate() {
        let emb = params.tok_emb.row(t as usize);
        let pos = params.pos_emb.row(i);
        let row = &mut x[i * d..(i + 1) * d];
        for j in 0..d {
            row[j] = emb[j] + pos[j];
        }
    }

    let allowed = allowed_keys(n, cfg.local_window, input.global_mask());
    let mut layers = Vec::with_capacity(cfg.layers);
    for layer in &params.layers {
        let (cache, x_next) = layer_forward(cfg, layer, &x, &allowed, n, &mut dropout_rng);
        layers.push(cache);
        x = x_next;
    }

    let (hidden, lnf_xhat, lnf_inv_std) =
        layer_norm(&x, n, d, params.lnf_g.data(), params.lnf_b.data());
    Ok(Cache {
        n,
        allowed,
        layers,
        x_last: x,
        lnf_xhat,
        lnf_inv_std,
        hidden,
    })
}

fn layer_forward(
    cfg: &ModelConfig,
    layer: &LayerParams,
    x: &[f64],
    allowed: &[Vec<usize>],
    n: usize,
    dropout_rng: &mut Option<&mut ChaCha8Rng>,
) -> (LayerCache, Vec<f64>) {
    let d = cfg.model_dim;
    let f = cfg.ffn_dim;

    let (a_norm, ln1_xhat, ln1_inv_std) =
        layer_norm(x, n, d, layer.ln1_g.data(), layer.ln1_b.data());
    let mut q = matmul(&a_norm, layer.wq.data(), n, d, d);
    add_bias(&mut q, layer.bq.data());
    let mut k = matmul(&a_norm, layer.wk.data(), n, d, d);
    add_bias(&mut k, layer.bk.data());
    let mut v = matmul(&a_norm, layer.wv.data(), n, d, d);
    add_bias(&mut v, layer.bv.data());

    let (ctx, probs) = attention(cfg, &q, &k, &v, allowed, n);
    let mut attn_out = matmul(&ctx, layer.wo.data(), n, d, d);
    add_bias(&mut attn_out, layer.bo.data());

    let attn_drop = dropout_rng
        .as_deref_mut()
        .filter(|_| cfg.dropout > 0.0)
        .map(|rng| dropout_mask(n * d, cfg.dropout, rng));
    let mut x_mid = x.to_vec();
    match &attn_drop {
        Some(mask) => {
            for ((xm, &a), &m) in x_mid.iter_mut().zip(&attn_out).zip(mask) {
                *xm += a * m;
            }
        }
        None => {
            for (xm, &a) in x_mid.iter_mut().zip(&attn_out) {
                *xm += a;
            }
        }
    }

    let (f_norm, ln2_xhat, ln2_inv_std) =
        layer_norm(&x_mid, n, d, layer.ln2_g.data(), layer.ln2_b.data());
    let mut ffn_pre = matmul(&f_norm, layer.w1.data(), n, d, f);
    add_bias(&mut ffn_pre, layer.b1.data());
    let ffn_act: Vec<f64> = ffn_pre.iter().map(|&u| gelu(u)).collect();
    let mut ffn_out = matmul(&ffn_act, layer.w2.data(), n, f, d);
    add_bias(&mut ffn_out, layer.b2.data());

    let ffn_drop = dropout_rng
        .as_deref_mut()
        .filter(|_| cfg.dropout > 0.0)
        .map(|rng| dropout_mask(n * d, cfg.dropout, rng));
    let mut x_out = x_mid.clone();
    match &ffn_drop {
        Some(mask) => {
            for ((xo, &a), &m) in x_out.iter_mut().zip(&ffn_out).zip(mask) {
                *xo += a * m;
            }
        }
        None => {
            for (xo, &a) in x_out.iter_mut().zip(&ffn_out) {
                *xo += a;
            }
        }
    }

    let cache = LayerCache {
        x_in: x.to_vec(),
        ln1_xhat,
        ln1_inv_std,
        q,
        k,
        v,
        probs,
        ctx,
        attn_drop,
        ln2_xhat,
        ln2_inv_std,
        ffn_pre,
        ffn_act,
        ffn_drop,
    };
    (cache, x_out)
}

/// Applies the span head to final hidden states.
pub(crate) fn span_logits(params: &ModelParams, cache: &Cache) -> (Vec<f64>, Vec<f64>) {
    let d = params.cfg.model_dim;
    let n = cache.n;
    let w = params.span_w.data();
    let b = params.span_b.data();
    let mut start = vec![0.0; n];
    let mut end = vec![0.0; n];
    for i in 0..n {
        let h = &cache.hidden[i * d..(i + 1) * d];
        let mut s = b[0];
        let mut e = b[1];
        for (j, &hv) in h.iter().enumerate() {
            s += hv * w[j * 2];
            e += hv * w[j * 2 + 1];
        }
        start[i] = s;
        end[i] = e;
    }
    (start, end)
}

/// Evaluation-mode forward pass: deterministic, no dropout. Returns start
/// and end logits over every token position.
pub fn forward(params: &ModelParams, input: &ModelInput) -> Result<(Vec<f64>, Vec<f64>)> {
    let cache = forward_cache(params, input, None)?;
    Ok(span_logits(params, &cache))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::units::IndexSpan;

    fn tiny_cfg(layers: usize, window: usize) -> ModelConfig {
        ModelConfig {
            vocab_size: 10,
            max_len: 32,
            layers,
            model_dim: 8,
            heads: 2,
            ffn_dim: 16,
            local_window: window,
            dropout: 0.0,
        }
    }

    fn plain_input(n: usize, globals: &[usize]) -> ModelInput {
        let tokens: Vec<u32> = (0..n).map(|i| (i % 5) as u32).collect();
        let global_mask: Vec<bool> = (0..n).map(|i| globals.contains(&i)).collect();
        let passage_mask: Vec<bool> = global_mask.iter().map(|&g| !g).collect();
        ModelInput::new(tokens, passage_mask, global_mask, None).unwrap()
    }

    #[test]
    fn allowed_keys_window_and_globals() {
        let mut gmask = vec![false; 8];
        gmask[0] = true;
        gmask[5] = true;
        let allowed = allowed_keys(8, 1, &gmask);
        assert_eq!(allowed[0], (0..8).collect::<Vec<_>>());
        assert_eq!(allowed[5], (0..8).collect::<Vec<_>>());
        // Position 3: window {2,3,4} plus globals {0,5}.
        assert_eq!(allowed[3], vec![0, 2, 3, 4, 5]);
        // Position 7: window {6,7} plus globals.
        assert_eq!(allowed[7], vec![0, 5, 6, 7]);
        // Position 1: global 0 falls inside the window.
        assert_eq!(allowed[1], vec![0, 1, 2, 5]);
    }

    #[test]
    fn locality_without_globals() {
        let cfg = tiny_cfg(1, 2);
        let params = ModelParams::init(&cfg, 5);
        let n = 11;
        let base = plain_input(n, &[]);
        let cache = forward_cache(&params, &base, None).unwrap();
        let out_base = cache.layer_output(0).to_vec();

        // Perturb token j by swapping in a different id.
        let j = 5;
        let mut tokens = base.tokens().to_vec();
        tokens[j] = 9;
        let perturbed = ModelInput::new(
            tokens,
            base.passage_mask().to_vec(),
            base.global_mask().to_vec(),
            None,
        )
        .unwrap();
        let cache_p = forward_cache(&params, &perturbed, None).unwrap();
        let out_p = cache_p.layer_output(0).to_vec();

        let d = cfg.model_dim;
        for i in 0..n {
            let changed = (0..d).any(|c| (out_base[i * d + c] - out_p[i * d + c]).abs() > 1e-12);
            let within = (i as isize - j as isize).unsigned_abs() <= cfg.local_window;
            assert_eq!(
                changed, within,
                "position {i}: changed={changed}, |i-j|<=w={within}"
            );
        }
    }

    #[test]
    fn globality_reaches_position_zero() {
        let cfg = tiny_cfg(1, 1);
        let params = ModelParams::init(&cfg, 6);
        let n = 12;
        let base = plain_input(n, &[0]);
        let cache = forward_cache(&params, &base, None).unwrap();
        let out_base = cache.layer_output(0).to_vec();
        let d = cfg.model_dim;
        for j in 1..n {
            let mut tokens = base.tokens().to_vec();
            tokens[j] = 9;
            let perturbed = ModelInput::new(
                tokens,
                base.passage_mask().to_vec(),
                base.global_mask().to_vec(),
                None,
            )
            .unwrap();
            let cache_p = forward_cache(&params, &perturbed, None).unwrap();
            let out_p = cache_p.layer_output(0);
            let changed = (0..d).any(|c| (out_base[c] - out_p[c]).abs() > 1e-12);
            assert!(changed, "perturbing {j} must reach global position 0");
        }
    }

    #[test]
    fn attention_rows_are_distributions_respecting_mask() {
        let cfg = tiny_cfg(2, 2);
        let params = ModelParams::init(&cfg, 7);
        let n = 10;
        let input = plain_input(n, &[0, 1]);
        let cache = forward_cache(&params, &input, None).unwrap();
        for layer in &cache.layers {
            for head in &layer.probs {
                for (i, row) in head.iter().enumerate() {
                    let sum: f64 = row.iter().sum();
                    assert!((sum - 1.0).abs() < 1e-9, "row {i} sums to {sum}");
                    assert!(row.iter().all(|&p| p >= 0.0));
                    assert_eq!(row.len(), cache.allowed[i].len());
                    // Dense materialization: everything outside allowed is 0.
                    let mut dense = vec![0.0; n];
                    for (&j, &p) in cache.allowed[i].iter().zip(row) {
                        dense[j] = p;
                    }
                    for j in 0..n {
                        if !cache.allowed[i].contains(&j) {
                            assert_eq!(dense[j], 0.0);
                        }
                    }
                }
            }
        }
    }

    /// Independent single-head dense attention computation for a 1-layer
    /// model over a length-3 input with every position global.
    #[test]
    fn manual_forward_oracle_single_head() {
        let cfg = ModelConfig {
            vocab_size: 6,
            max_len: 8,
            layers: 1,
            model_dim: 2,
            heads: 1,
            ffn_dim: 4,
            local_window: 8,
            dropout: 0.0,
        };
        let mut params = ModelParams::init(&cfg, 0);
        // Hand-set weights with simple values.
        let set = |t: &mut crate::tensor::Tensor, vals: &[f64]| {
            t.data_mut().copy_from_slice(vals);
        };
        set(&mut params.tok_emb, &[
            0.1, 0.2, //
            -0.3, 0.4, //
            0.5, -0.6, //
            0.0, 0.0, 0.0, 0.0, 0.0, 0.0,
        ]);
        set(&mut params.pos_emb, &[
            0.01, -0.02, 0.03, 0.04, -0.05, 0.06, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0,
        ]);
        let l = &mut params.layers[0];
        set(&mut l.wq, &[0.2, -0.1, 0.3, 0.4]);
        set(&mut l.bq, &[0.05, -0.02]);
        set(&mut l.wk, &[-0.2, 0.5, 0.1, 0.0]);
        set(&mut l.bk, &[0.0, 0.1]);
        set(&mut l.wv, &[0.7, 0.2, -0.3, 0.1]);
        set(&mut l.bv, &[0.01, 0.02]);
        set(&mut l.wo, &[0.5, -0.5, 0.25, 0.75]);
        set(&mut l.bo, &[0.0, 0.05]);
        set(&mut l.w1, &[0.3, -0.2, 0.1, 0.4, 0.2, 0.2, -0.1, 0.5]);
        set(&mut l.b1, &[0.0, 0.1, -0.1, 0.2]);
        set(&mut l.w2, &[0.2, 0.1, -0.4, 0.3, 0.5, -0.2, 0.1, 0.1]);
        set(&mut l.b2, &[0.02, -0.01]);
        set(&mut params.span_w, &[1.0, -1.0, 0.5, 0.5]);
        set(&mut params.span_b, &[0.1, -0.1]);

        let tokens = vec![0u32, 1, 2];
        let input = ModelInput::new(
            tokens.clone(),
            vec![false; 3],
            vec![true; 3],
            None,
        )
        .unwrap();
        let (start, end) = forward(&params, &input).unwrap();

        // Fully independent recomputation with dense attention.
        let d = 2usize;
        let ln = |row: &[f64], g: &[f64], b: &[f64]| -> Vec<f64> {
            let mean = (row[0] + row[1]) / 2.0;
            let var = ((row[0] - mean).powi(2) + (row[1] - mean).powi(2)) / 2.0;
            let inv = 1.0 / (var + LN_EPS).sqrt();
            vec![
                (row[0] - mean) * inv * g[0] + b[0],
                (row[1] - mean) * inv * g[1] + b[1],
            ]
        };
        let mv = |x: &[f64], w: &[f64], b: &[f64]| -> Vec<f64> {
            let cols = b.len();
            let mut out = b.to_vec();
            for (j, o) in out.iter_mut().enumerate().take(cols) {
                for (i, &xv) in x.iter().enumerate() {
                    *o += xv * w[i * cols + j];
                }
            }
            out
        };
        let mut xs: Vec<Vec<f64>> = (0..3)
            .map(|i| {
                let e = params.tok_emb.row(tokens[i] as usize);
                let p = params.pos_emb.row(i);
                vec![e[0] + p[0], e[1] + p[1]]
            })
            .collect();
        let l = &params.layers[0];
        let a_norm: Vec<Vec<f64>> = xs
            .iter()
            .map(|x| ln(x, l.ln1_g.data(), l.ln1_b.data()))
            .collect();
        let qs: Vec<Vec<f64>> = a_norm.iter().map(|a| mv(a, l.wq.data(), l.bq.data())).collect();
        let ks: Vec<Vec<f64>> = a_norm.iter().map(|a| mv(a, l.wk.data(), l.bk.data())).collect();
        let vs: Vec<Vec<f64>> = a_norm.iter().map(|a| mv(a, l.wv.data(), l.bv.data())).collect();
        let scale = 1.0 / (d as f64).sqrt();
        let mut attn_rows = Vec::new();
        for i in 0..3 {
            let scores: Vec<f64> = (0..3)
                .map(|j| scale * (qs[i][0] * ks[j][0] + qs[i][1] * ks[j][1]))
                .collect();
            let m = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let exps: Vec<f64> = scores.iter().map(|s| (s - m).exp()).collect();
            let z: f64 = exps.iter().sum();
            let mut ctx = vec![0.0; d];
            for j in 0..3 {
                for c in 0..d {
                    ctx[c] += exps[j] / z * vs[j][c];
                }
            }
            attn_rows.push(mv(&ctx, l.wo.data(), l.bo.data()));
        }
        for i in 0..3 {
            xs[i][0] += attn_rows[i][0];
            xs[i][1] += attn_rows[i][1];
        }
        let mut hs = Vec::new();
        for x in &xs {
            let f_norm = ln(x, l.ln2_g.data(), l.ln2_b.data());
            let u = mv(&f_norm, l.w1.data(), l.b1.data());
            let g: Vec<f64> = u.iter().map(|&t| gelu(t)).collect();
            let o = mv(&g, l.w2.data(), l.b2.data());
            hs.push(vec![x[0] + o[0], x[1] + o[1]]);
        }
        for (i, h) in hs.iter().enumerate() {
            let hn = ln(h, params.lnf_g.data(), params.lnf_b.data());
            let logits = mv(&hn, params.span_w.data(), params.span_b.data());
            assert!(
                (logits[0] - start[i]).abs() < 1e-12,
                "start logit {i}: {} vs {}",
                logits[0],
                start[i]
            );
            assert!((logits[1] - end[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn forward_is_bitwise_deterministic() {
        let cfg = tiny_cfg(2, 3);
        let params = ModelParams::init(&cfg, 11);
        let input = plain_input(16, &[0, 1, 2]);
        let (s1, e1) = forward(&params, &input).unwrap();
        let (s2, e2) = forward(&params, &input).unwrap();
        assert_eq!(s1, s2);
        assert_eq!(e1, e2);
    }

    #[test]
    fn forward_rejects_overlong_and_bad_tokens() {
        let cfg = tiny_cfg(1, 2);
        let params = ModelParams::init(&cfg, 1);
        let too_long = plain_input(cfg.max_len + 1, &[]);
        assert!(forward(&params, &too_long).is_err());
        let bad = ModelInput::new(vec![99], vec![true], vec![false], None).unwrap();
        assert!(matches!(
            forward(&params, &bad),
            Err(Error::UnitOutOfRange { unit: 99, .. })
        ));
    }

    #[test]
    fn input_validation() {
        // Overlapping masks rejected.
        assert!(ModelInput::new(vec![0, 1], vec![true, true], vec![true, false], None).is_err());
        // Target outside passage rejected.
        assert!(ModelInput::new(
            vec![0, 1, 2],
            vec![false, true, true],
            vec![true, false, false],
            Some(IndexSpan { start: 0, end: 1 }),
        )
        .is_err());
        assert!(ModelInput::new(
            vec![0, 1, 2],
            vec![false, true, true],
            vec![true, false, false],
            Some(IndexSpan { start: 1, end: 2 }),
        )
        .is_ok());
    }
}
