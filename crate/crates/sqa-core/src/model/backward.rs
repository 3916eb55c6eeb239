//! Analytic gradients of the span loss with respect to every parameter.

use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::tensor::{dot, matmul_a_bt_acc, matmul_at_b_acc, Tensor};

use super::forward::{forward_cache, gelu_prime, span_logits, Cache, LayerCache};
use super::params::{LayerParams, ModelParams};
use super::span::span_loss_grad;
use super::{ModelConfig, ModelInput};

/// Loss and gradients in evaluation mode (no dropout). The input must carry
/// a target span.
pub fn backward(params: &ModelParams, input: &ModelInput) -> Result<(f64, ModelParams)> {
    backward_inner(params, input, None)
}

/// Loss and gradients with training-mode dropout driven by `rng`.
pub fn backward_train(
    params: &ModelParams,
    input: &ModelInput,
    rng: &mut ChaCha8Rng,
) -> Result<(f64, ModelParams)> {
    backward_inner(params, input, Some(rng))
}

fn backward_inner(
    params: &ModelParams,
    input: &ModelInput,
    rng: Option<&mut ChaCha8Rng>,
) -> Result<(f64, ModelParams)> {
    let target = input.target().ok_or_else(|| Error::Shape {
        context: "backward".into(),
        detail: "input has no target span".into(),
    })?;
    let cache = forward_cache(params, input, rng)?;
    let (start_logits, end_logits) = span_logits(params, &cache);
    let (loss, dstart, dend) =
        span_loss_grad(&start_logits, &end_logits, &target, input.passage_mask())?;
    if !loss.is_finite() {
        return Err(Error::NonFinite {
            context: "span loss".into(),
        });
    }

    let mut grads = params.zeros_like();
    let d = params.cfg.model_dim;
    let n = cache.n;

    // Span head: logits = hidden @ span_w + span_b.
    let mut dhidden = vec![0.0; n * d];
    let w = params.span_w.data();
    {
        let dw = grads.span_w.data_mut();
        let db = grads.span_b.data_mut();
        for i in 0..n {
            let h = &cache.hidden[i * d..(i + 1) * d];
            let (ds, de) = (dstart[i], dend[i]);
            if ds == 0.0 && de == 0.0 {
                continue;
            }
            db[0] += ds;
            db[1] += de;
            let dh = &mut dhidden[i * d..(i + 1) * d];
            for j in 0..d {
                dw[j * 2] += ds * h[j];
                dw[j * 2 + 1] += de * h[j];
                dh[j] = ds * w[j * 2] + de * w[j * 2 + 1];
            }
        }
    }

    backward_from_hidden(params, input, &cache, &dhidden, &mut grads);
    debug_assert!(grads.all_finite(), "non-finite gradient");
    Ok((loss, grads))
}

/// Backpropagates `dhidden` (gradient at the final hidden states) through
/// the encoder body into `grads`. Shared by the span and masked-unit paths.
pub(crate) fn backward_from_hidden(
    params: &ModelParams,
    input: &ModelInput,
    cache: &Cache,
    dhidden: &[f64],
    grads: &mut ModelParams,
) {
    let cfg = &params.cfg;
    let d = cfg.model_dim;
    let n = cache.n;

    let mut dx = ln_backward(
        dhidden,
        &cache.lnf_xhat,
        &cache.lnf_inv_std,
        params.lnf_g.data(),
        n,
        d,
        &mut grads.lnf_g,
        &mut grads.lnf_b,
    );

    for l in (0..cfg.layers).rev() {
        dx = layer_backward(
            cfg,
            &params.layers[l],
            &cache.layers[l],
            &cache.allowed,
            &dx,
            &mut grads.layers[l],
        );
    }

    for (i, &t) in input.tokens().iter().enumerate() {
        let src = &dx[i * d..(i + 1) * d];
        let emb_row = grads.tok_emb.row_mut(t as usize);
        for (g, &v) in emb_row.iter_mut().zip(src) {
            *g += v;
        }
        let pos_row = grads.pos_emb.row_mut(i);
        for (g, &v) in pos_row.iter_mut().zip(src) {
            *g += v;
        }
    }
}

/// Layer-norm backward. Accumulates gain/bias grads, returns dx.
#[allow(clippy::too_many_arguments)]
fn ln_backward(
    dy: &[f64],
    xhat: &[f64],
    inv_std: &[f64],
    gain: &[f64],
    n: usize,
    d: usize,
    dgain: &mut Tensor,
    dbias: &mut Tensor,
) -> Vec<f64> {
    let mut dx = vec![0.0; n * d];
    let dg = dgain.data_mut();
    let db = dbias.data_mut();
    let inv_d = 1.0 / d as f64;
    for i in 0..n {
        let dy_row = &dy[i * d..(i + 1) * d];
        let xh_row = &xhat[i * d..(i + 1) * d];
        let mut mean_dxhat = 0.0;
        let mut mean_dxhat_xhat = 0.0;
        for j in 0..d {
            dg[j] += dy_row[j] * xh_row[j];
            db[j] += dy_row[j];
            let dxh = dy_row[j] * gain[j];
            mean_dxhat += dxh;
            mean_dxhat_xhat += dxh * xh_row[j];
        }
        mean_dxhat *= inv_d;
        mean_dxhat_xhat *= inv_d;
        let dx_row = &mut dx[i * d..(i + 1) * d];
        for j in 0..d {
            let dxh = dy_row[j] * gain[j];
            dx_row[j] = inv_std[i] * (dxh - mean_dxhat - xh_row[j] * mean_dxhat_xhat);
        }
    }
    dx
}

fn colsum_acc(dst: &mut Tensor, src: &[f64]) {
    let d = dst.len();
    for row in src.chunks_exact(d) {
        for (acc, &v) in dst.data_mut().iter_mut().zip(row) {
            *acc += v;
        }
    }
}

/// Rebuilds a layer-norm output from its cached normalized values.
fn normed_from_xhat(xhat: &[f64], gain: &[f64], bias: &[f64]) -> Vec<f64> {
    let d = gain.len();
    let mut out = vec![0.0; xhat.len()];
    for (o_row, x_row) in out.chunks_exact_mut(d).zip(xhat.chunks_exact(d)) {
        for j in 0..d {
            o_row[j] = x_row[j] * gain[j] + bias[j];
        }
    }
    out
}

fn apply_drop(dy: &[f64], mask: &Option<Vec<f64>>) -> Vec<f64> {
    match mask {
        Some(m) => dy.iter().zip(m).map(|(&g, &s)| g * s).collect(),
        None => dy.to_vec(),
    }
}

fn layer_backward(
    cfg: &ModelConfig,
    layer: &LayerParams,
    cache: &LayerCache,
    allowed: &[Vec<usize>],
    dx_out: &[f64],
    g: &mut LayerParams,
) -> Vec<f64> {
    let d = cfg.model_dim;
    let f = cfg.ffn_dim;
    let n = dx_out.len() / d;

    // FFN block: x_out = x_mid + drop(ffn_out).
    let dffn_out = apply_drop(dx_out, &cache.ffn_drop);
    let mut dx_mid = dx_out.to_vec();

    colsum_acc(&mut g.b2, &dffn_out);
    matmul_at_b_acc(g.w2.data_mut(), &cache.ffn_act, &dffn_out, n, f, d);
    let mut dact = vec![0.0; n * f];
    matmul_a_bt_acc(&mut dact, &dffn_out, layer.w2.data(), n, d, f);
    let du: Vec<f64> = dact
        .iter()
        .zip(&cache.ffn_pre)
        .map(|(&da, &u)| da * gelu_prime(u))
        .collect();

    colsum_acc(&mut g.b1, &du);
    let f_norm = normed_from_xhat(&cache.ln2_xhat, layer.ln2_g.data(), layer.ln2_b.data());
    matmul_at_b_acc(g.w1.data_mut(), &f_norm, &du, n, d, f);
    let mut df_norm = vec![0.0; n * d];
    matmul_a_bt_acc(&mut df_norm, &du, layer.w1.data(), n, f, d);

    let dx_from_ln2 = ln_backward(
        &df_norm,
        &cache.ln2_xhat,
        &cache.ln2_inv_std,
        layer.ln2_g.data(),
        n,
        d,
        &mut g.ln2_g,
        &mut g.ln2_b,
    );
    for (a, b) in dx_mid.iter_mut().zip(&dx_from_ln2) {
        *a += b;
    }

    // Attention block: x_mid = x_in + drop(attn_out).
    let dattn_out = apply_drop(&dx_mid, &cache.attn_drop);
    let mut dx_in = dx_mid;

    colsum_acc(&mut g.bo, &dattn_out);
    matmul_at_b_acc(g.wo.data_mut(), &cache.ctx, &dattn_out, n, d, d);
    let mut dctx = vec![0.0; n * d];
    matmul_a_bt_acc(&mut dctx, &dattn_out, layer.wo.data(), n, d, d);

    let hd = cfg.head_dim();
    let scale = 1.0 / (hd as f64).sqrt();
    let mut dq = vec![0.0; n * d];
    let mut dk = vec![0.0; n * d];
    let mut dv = vec![0.0; n * d];
    for h in 0..cfg.heads {
        let off = h * hd;
        for i in 0..n {
            let keys = &allowed[i];
            let probs = &cache.probs[h][i];
            let dctx_i = &dctx[i * d + off..i * d + off + hd];
            if dctx_i.iter().all(|&v| v == 0.0) {
                continue;
            }
            // dp_j and softmax jacobian.
            let mut dp = Vec::with_capacity(keys.len());
            let mut sum_p_dp = 0.0;
            for (&j, &p) in keys.iter().zip(probs) {
                let v_j = &cache.v[j * d + off..j * d + off + hd];
                let dp_j = dot(dctx_i, v_j);
                sum_p_dp += p * dp_j;
                dp.push(dp_j);
            }
            let q_i = &cache.q[i * d + off..i * d + off + hd];
            let dq_i = &mut dq[i * d + off..i * d + off + hd];
            for ((&j, &p), &dp_j) in keys.iter().zip(probs).zip(&dp) {
                // dv from the context combination.
                let dv_j = &mut dv[j * d + off..j * d + off + hd];
                for (acc, &c) in dv_j.iter_mut().zip(dctx_i) {
                    *acc += p * c;
                }
                let ds = p * (dp_j - sum_p_dp) * scale;
                if ds == 0.0 {
                    continue;
                }
                let k_j = &cache.k[j * d + off..j * d + off + hd];
                for (acc, &kv) in dq_i.iter_mut().zip(k_j) {
                    *acc += ds * kv;
                }
                let dk_j = &mut dk[j * d + off..j * d + off + hd];
                for (acc, &qv) in dk_j.iter_mut().zip(q_i) {
                    *acc += ds * qv;
                }
            }
        }
    }

    colsum_acc(&mut g.bq, &dq);
    colsum_acc(&mut g.bk, &dk);
    colsum_acc(&mut g.bv, &dv);
    let a_norm = normed_from_xhat(&cache.ln1_xhat, layer.ln1_g.data(), layer.ln1_b.data());
    matmul_at_b_acc(g.wq.data_mut(), &a_norm, &dq, n, d, d);
    matmul_at_b_acc(g.wk.data_mut(), &a_norm, &dk, n, d, d);
    matmul_at_b_acc(g.wv.data_mut(), &a_norm, &dv, n, d, d);
    let mut da_norm = vec![0.0; n * d];
    matmul_a_bt_acc(&mut da_norm, &dq, layer.wq.data(), n, d, d);
    matmul_a_bt_acc(&mut da_norm, &dk, layer.wk.data(), n, d, d);
    matmul_a_bt_acc(&mut da_norm, &dv, layer.wv.data(), n, d, d);

    let dx_from_ln1 = ln_backward(
        &da_norm,
        &cache.ln1_xhat,
        &cache.ln1_inv_std,
        layer.ln1_g.data(),
        n,
        d,
        &mut g.ln1_g,
        &mut g.ln1_b,
    );
    for (a, b) in dx_in.iter_mut().zip(&dx_from_ln1) {
        *a += b;
    }
    dx_in
}
