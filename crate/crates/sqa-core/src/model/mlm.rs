//! Masked-unit prediction: the pretraining objective for donor models.
//! Output logits tie to the input embedding table plus a vocabulary bias.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::tensor::dot;

use super::backward::backward_from_hidden;
use super::forward::forward_cache;
use super::params::ModelParams;
use super::{ModelInput, SpecialTokens};

pub const MLM_MASK_PROB: f64 = 0.15;

/// A corrupted sequence with the positions to predict and their true units.
#[derive(Debug, Clone)]
pub struct MaskedExample {
    pub input: ModelInput,
    pub targets: Vec<(usize, u32)>,
}

/// BERT-style corruption of a dense unit sequence already wrapped in
/// specials: 15% of unit positions are selected; of those 80% become MASK,
/// 10% a random unit, 10% stay. Always selects at least one position.
pub fn mask_tokens(
    tokens: &[u32],
    unit_count: usize,
    global_mask: &[bool],
    rng: &mut ChaCha8Rng,
) -> Result<MaskedExample> {
    let specials = SpecialTokens::for_unit_count(unit_count);
    let unit_positions: Vec<usize> = tokens
        .iter()
        .enumerate()
        .filter(|(_, &t)| (t as usize) < unit_count)
        .map(|(i, _)| i)
        .collect();
    if unit_positions.is_empty() {
        return Err(Error::Shape {
            context: "mask_tokens".into(),
            detail: "sequence has no unit positions to mask".into(),
        });
    }
    let mut corrupted = tokens.to_vec();
    let mut targets = Vec::new();
    for &pos in &unit_positions {
        if rng.gen::<f64>() >= MLM_MASK_PROB {
            continue;
        }
        targets.push((pos, tokens[pos]));
        let action: f64 = rng.gen();
        if action < 0.8 {
            corrupted[pos] = specials.mask;
        } else if action < 0.9 {
            corrupted[pos] = rng.gen_range(0..unit_count as u32);
        }
    }
    if targets.is_empty() {
        let pos = unit_positions[rng.gen_range(0..unit_positions.len())];
        targets.push((pos, tokens[pos]));
        corrupted[pos] = specials.mask;
    }
    let n = corrupted.len();
    let input = ModelInput::new(corrupted, vec![false; n], global_mask.to_vec(), None)?;
    Ok(MaskedExample { input, targets })
}

/// Builds one pretraining example from a raw dense unit sequence.
///
/// Long enough passages get a pseudo-query: a copied window of the passage
/// leads the sequence as `[BOS] window [SEP] passage [EOS]` with global
/// attention on BOS and the window, and the passage copy of the window is
/// masked hard while the rest masks lightly. Predicting those positions
/// forces unit copying through global attention, the same circuitry span
/// extraction uses. Short passages fall back to plain `[BOS] passage [EOS]`
/// masking.
pub fn build_pretrain_example(
    passage: &[u32],
    unit_count: usize,
    rng: &mut ChaCha8Rng,
) -> Result<MaskedExample> {
    let specials = SpecialTokens::for_unit_count(unit_count);
    let l = passage.len();
    if l < 6 {
        let mut tokens = Vec::with_capacity(l + 2);
        tokens.push(specials.bos);
        tokens.extend_from_slice(passage);
        tokens.push(specials.eos);
        let mut global = vec![false; tokens.len()];
        global[0] = true;
        return mask_tokens(&tokens, unit_count, &global, rng);
    }

    // Half the examples crop the passage to a short window around the copy
    // region; alignment on short contexts bootstraps the full-length skill.
    let passage: &[u32] = if l > 12 && rng.gen_bool(0.5) {
        let crop_len = rng.gen_range(10..=20.min(l));
        let lo = (l - crop_len).min(rng.gen_range(0..=l - crop_len));
        &passage[lo..lo + crop_len]
    } else {
        passage
    };
    let l = passage.len();

    let w_hi = 12usize.min(l / 2).max(4);
    let w = rng.gen_range(4..=w_hi);
    let s = rng.gen_range(0..=l - w);
    let mut tokens = Vec::with_capacity(l + w + 3);
    tokens.push(specials.bos);
    tokens.extend_from_slice(&passage[s..s + w]);
    tokens.push(specials.sep);
    let p_off = tokens.len();
    tokens.extend_from_slice(passage);
    tokens.push(specials.eos);

    let mut global = vec![false; tokens.len()];
    for g in global.iter_mut().take(w + 1) {
        *g = true;
    }

    // Alternate positions under the copied window are masked: every masked
    // slot keeps visible neighbors to align on, and its unit is only
    // recoverable by matching the neighborhood against the query. Light
    // random masking elsewhere keeps general context prediction in the mix.
    let parity = rng.gen_range(0..2usize);
    let mut targets = Vec::new();
    for pos in 0..l {
        let in_copy = pos >= s && pos < s + w;
        let masked = if in_copy {
            (pos - s) % 2 == parity
        } else {
            rng.gen::<f64>() < 0.05
        };
        if !masked {
            continue;
        }
        let tok_pos = p_off + pos;
        targets.push((tok_pos, passage[pos]));
        let action: f64 = rng.gen();
        if action < 0.9 {
            tokens[tok_pos] = specials.mask;
        } else if action < 0.95 {
            tokens[tok_pos] = rng.gen_range(0..unit_count as u32);
        }
    }
    if targets.is_empty() {
        let pos = rng.gen_range(0..l);
        targets.push((p_off + pos, passage[pos]));
        tokens[p_off + pos] = specials.mask;
    }
    let n = tokens.len();
    let input = ModelInput::new(tokens, vec![false; n], global, None)?;
    Ok(MaskedExample { input, targets })
}

/// Mean NLL of the true units at the masked positions, evaluation mode.
pub fn mlm_loss(params: &ModelParams, ex: &MaskedExample) -> Result<f64> {
    let cache = forward_cache(params, &ex.input, None)?;
    let d = params.cfg.model_dim;
    let mut loss = 0.0;
    for &(pos, unit) in &ex.targets {
        let h = &cache.hidden[pos * d..(pos + 1) * d];
        let (nll, _) = vocab_nll(params, h, unit);
        loss += nll;
    }
    Ok(loss / ex.targets.len() as f64)
}

/// Loss and gradients for one masked example. Dropout applies when `rng`
/// is provided.
pub fn mlm_loss_and_grads(
    params: &ModelParams,
    ex: &MaskedExample,
    rng: Option<&mut ChaCha8Rng>,
) -> Result<(f64, ModelParams)> {
    if ex.targets.is_empty() {
        return Err(Error::Shape {
            context: "mlm".into(),
            detail: "no target positions".into(),
        });
    }
    let cache = forward_cache(params, &ex.input, rng)?;
    let cfg = &params.cfg;
    let d = cfg.model_dim;
    let n = cache.n;
    let inv_t = 1.0 / ex.targets.len() as f64;

    let mut grads = params.zeros_like();
    let mut dhidden = vec![0.0; n * d];
    let mut loss = 0.0;
    for &(pos, unit) in &ex.targets {
        let h = &cache.hidden[pos * d..(pos + 1) * d];
        let (nll, mut dlogits) = vocab_nll(params, h, unit);
        loss += nll * inv_t;
        for dl in &mut dlogits {
            *dl *= inv_t;
        }
        // logits_v = dot(h, emb_v) + bias_v; tied embeddings get gradient
        // from the output side here and from the input side in the body.
        let dh = &mut dhidden[pos * d..(pos + 1) * d];
        for (v, &dl) in dlogits.iter().enumerate() {
            if dl == 0.0 {
                continue;
            }
            grads.mlm_bias.data_mut()[v] += dl;
            let emb = params.tok_emb.row(v);
            let demb = grads.tok_emb.row_mut(v);
            for j in 0..d {
                dh[j] += dl * emb[j];
                demb[j] += dl * h[j];
            }
        }
    }
    if !loss.is_finite() {
        return Err(Error::NonFinite {
            context: "mlm loss".into(),
        });
    }
    backward_from_hidden(params, &ex.input, &cache, &dhidden, &mut grads);
    Ok((loss, grads))
}

/// NLL of `target` under softmax over the full vocabulary; the gradient is
/// softmax minus onehot.
fn vocab_nll(params: &ModelParams, h: &[f64], target: u32) -> (f64, Vec<f64>) {
    let vocab = params.cfg.vocab_size;
    let bias = params.mlm_bias.data();
    let mut logits: Vec<f64> = (0..vocab)
        .map(|v| dot(h, params.tok_emb.row(v)) + bias[v])
        .collect();
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut z = 0.0;
    for l in &mut logits {
        *l = (*l - max).exp();
        z += *l;
    }
    let p_target = logits[target as usize] / z;
    let loss = -p_target.ln();
    for l in &mut logits {
        *l /= z;
    }
    logits[target as usize] -= 1.0;
    (loss, logits)
}
