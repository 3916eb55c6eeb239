//! Span loss and decoding over start/end logit tracks. The softmax is
//! restricted to passage positions: answers cannot live in the question.

use crate::error::{Error, Result};
use crate::units::IndexSpan;

/// Negative log likelihood of the target start and end positions under
/// softmaxes over the passage region.
pub fn span_loss(
    start_logits: &[f64],
    end_logits: &[f64],
    target: &IndexSpan,
    passage_mask: &[bool],
) -> Result<f64> {
    span_loss_grad(start_logits, end_logits, target, passage_mask).map(|(l, _, _)| l)
}

/// As [`span_loss`], also returning d loss / d logits for both tracks
/// (zero outside the passage).
pub fn span_loss_grad(
    start_logits: &[f64],
    end_logits: &[f64],
    target: &IndexSpan,
    passage_mask: &[bool],
) -> Result<(f64, Vec<f64>, Vec<f64>)> {
    let n = start_logits.len();
    if end_logits.len() != n || passage_mask.len() != n {
        return Err(Error::Shape {
            context: "span_loss".into(),
            detail: "logit and mask lengths differ".into(),
        });
    }
    if target.start > target.end
        || target.end >= n
        || !passage_mask[target.start]
        || !passage_mask[target.end]
    {
        return Err(Error::Shape {
            context: "span_loss".into(),
            detail: format!(
                "target ({}, {}) outside passage region",
                target.start, target.end
            ),
        });
    }
    let (nll_s, dstart) = masked_nll(start_logits, passage_mask, target.start);
    let (nll_e, dend) = masked_nll(end_logits, passage_mask, target.end);
    Ok((nll_s + nll_e, dstart, dend))
}

/// Softmax-NLL over the masked positions; gradient is softmax minus onehot.
fn masked_nll(logits: &[f64], mask: &[bool], target: usize) -> (f64, Vec<f64>) {
    let max = logits
        .iter()
        .zip(mask)
        .filter(|(_, &m)| m)
        .map(|(&l, _)| l)
        .fold(f64::NEG_INFINITY, f64::max);
    let mut z = 0.0;
    for (l, &m) in logits.iter().zip(mask) {
        if m {
            z += (l - max).exp();
        }
    }
    let log_z = z.ln() + max;
    let loss = log_z - logits[target];
    let mut grad = vec![0.0; logits.len()];
    for (i, (l, &m)) in logits.iter().zip(mask).enumerate() {
        if m {
            grad[i] = (l - max).exp() / z;
        }
    }
    grad[target] -= 1.0;
    (loss, grad)
}

/// Highest-scoring span `(s, e)` with `s <= e <= s + max_answer_len - 1`,
/// both endpoints inside the passage. Ties break to the smallest start,
/// then the smallest end.
pub fn decode_span(
    start_logits: &[f64],
    end_logits: &[f64],
    passage_mask: &[bool],
    max_answer_len: usize,
) -> Result<IndexSpan> {
    let n = start_logits.len();
    if end_logits.len() != n || passage_mask.len() != n {
        return Err(Error::Shape {
            context: "decode_span".into(),
            detail: "logit and mask lengths differ".into(),
        });
    }
    if max_answer_len == 0 {
        return Err(Error::Config("max_answer_len must be >= 1".into()));
    }
    let mut best: Option<(f64, usize, usize)> = None;
    for s in 0..n {
        if !passage_mask[s] {
            continue;
        }
        let e_hi = (s + max_answer_len - 1).min(n - 1);
        for e in s..=e_hi {
            if !passage_mask[e] {
                continue;
            }
            let score = start_logits[s] + end_logits[e];
            if best.map(|(b, _, _)| score > b).unwrap_or(true) {
                best = Some((score, s, e));
            }
        }
    }
    match best {
        Some((_, s, e)) => Ok(IndexSpan { start: s, end: e }),
        None => Err(Error::Shape {
            context: "decode_span".into(),
            detail: "no passage positions".into(),
        }),
    }
}
