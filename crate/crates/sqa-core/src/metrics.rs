//! Span evaluation metrics: frame-level F1 (FF1), audio overlapping score
//! (AOS, temporal intersection over union), word error rate, and corpus
//! aggregation.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::units::{frame_range, TimeSpan};

/// Frame-level F1: spans are rasterized to inclusive frame ranges using the
/// same rounding convention as the span conversions, then scored as set F1.
/// Returns 0 when either span rasterizes to no frames or there is no overlap.
pub fn ff1(pred: &TimeSpan, gold: &TimeSpan, frame_period: f64) -> f64 {
    let (p_first, p_last) = match frame_range(pred, frame_period) {
        Some(r) => r,
        None => return 0.0,
    };
    let (g_first, g_last) = match frame_range(gold, frame_period) {
        Some(r) => r,
        None => return 0.0,
    };
    let inter_first = p_first.max(g_first);
    let inter_last = p_last.min(g_last);
    if inter_first > inter_last {
        return 0.0;
    }
    let inter = (inter_last - inter_first + 1) as f64;
    let p_len = (p_last - p_first + 1) as f64;
    let g_len = (g_last - g_first + 1) as f64;
    let precision = inter / p_len;
    let recall = inter / g_len;
    2.0 * precision * recall / (precision + recall)
}

/// Audio overlapping score: intersection over union in seconds.
pub fn aos(pred: &TimeSpan, gold: &TimeSpan) -> f64 {
    let inter = (pred.end.min(gold.end) - pred.start.max(gold.start)).max(0.0);
    let union = pred.length() + gold.length() - inter;
    if union <= 0.0 {
        return 0.0;
    }
    inter / union
}

/// Word error rate: Levenshtein edits over the reference length. Exceeds 1
/// when the hypothesis needs more edits than the reference has words.
pub fn wer(reference: &[String], hypothesis: &[String]) -> Result<f64> {
    if reference.is_empty() {
        return Err(Error::EmptyReference);
    }
    Ok(levenshtein(reference, hypothesis) as f64 / reference.len() as f64)
}

fn levenshtein(a: &[String], b: &[String]) -> usize {
    let m = a.len();
    let n = b.len();
    let mut prev: Vec<usize> = (0..=n).collect();
    let mut curr = vec![0usize; n + 1];
    for i in 1..=m {
        curr[0] = i;
        for j in 1..=n {
            let cost = usize::from(a[i - 1] != b[j - 1]);
            curr[j] = (prev[j] + 1).min(curr[j - 1] + 1).min(prev[j - 1] + cost);
        }
        std::mem::swap(&mut prev, &mut curr);
    }
    prev[n]
}

/// Lowercases, strips punctuation, splits on whitespace.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split_whitespace()
        .map(|w| {
            w.chars()
                .filter(|c| c.is_alphanumeric() || *c == '\'')
                .flat_map(|c| c.to_lowercase())
                .collect::<String>()
        })
        .filter(|w| !w.is_empty())
        .collect()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExampleScore {
    pub id: String,
    pub ff1: f64,
    pub aos: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub wer: Option<f64>,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub missing: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalResult {
    pub per_example: Vec<ExampleScore>,
    /// Macro averages: arithmetic mean of per-example scores.
    pub ff1_macro: f64,
    pub aos_macro: f64,
    /// Micro averages: frame / second totals pooled across examples.
    pub ff1_micro: f64,
    pub aos_micro: f64,
    pub n_examples: usize,
    pub n_missing: usize,
}

/// Scores predictions against golds. Every gold id is scored; a gold with no
/// prediction scores 0 on both metrics and is flagged. A prediction with no
/// gold is an error.
pub fn evaluate(
    predictions: &BTreeMap<String, TimeSpan>,
    golds: &BTreeMap<String, TimeSpan>,
    frame_period: f64,
) -> Result<EvalResult> {
    let orphans: Vec<String> = predictions
        .keys()
        .filter(|id| !golds.contains_key(*id))
        .cloned()
        .collect();
    if !orphans.is_empty() {
        return Err(Error::IdMismatch { ids: orphans });
    }
    let mut per_example = Vec::with_capacity(golds.len());
    let mut inter_frames = 0.0f64;
    let mut pred_frames = 0.0f64;
    let mut gold_frames = 0.0f64;
    let mut inter_secs = 0.0f64;
    let mut union_secs = 0.0f64;
    let mut n_missing = 0usize;
    for (id, gold) in golds {
        let (g_first, g_last) = frame_range(gold, frame_period).unwrap_or((1, 0));
        let g_len = if g_first <= g_last {
            (g_last - g_first + 1) as f64
        } else {
            0.0
        };
        gold_frames += g_len;
        match predictions.get(id) {
            Some(pred) => {
                per_example.push(ExampleScore {
                    id: id.clone(),
                    ff1: ff1(pred, gold, frame_period),
                    aos: aos(pred, gold),
                    wer: None,
                    missing: false,
                });
                if let Some((p_first, p_last)) = frame_range(pred, frame_period) {
                    pred_frames += (p_last - p_first + 1) as f64;
                    if g_first <= g_last {
                        let f = p_first.max(g_first);
                        let l = p_last.min(g_last);
                        if f <= l {
                            inter_frames += (l - f + 1) as f64;
                        }
                    }
                }
                let inter = (pred.end.min(gold.end) - pred.start.max(gold.start)).max(0.0);
                inter_secs += inter;
                union_secs += pred.length() + gold.length() - inter;
            }
            None => {
                n_missing += 1;
                per_example.push(ExampleScore {
                    id: id.clone(),
                    ff1: 0.0,
                    aos: 0.0,
                    wer: None,
                    missing: true,
                });
                union_secs += gold.length();
            }
        }
    }
    let n = per_example.len();
    let mean = |f: fn(&ExampleScore) -> f64| {
        if n == 0 {
            0.0
        } else {
            per_example.iter().map(f).sum::<f64>() / n as f64
        }
    };
    let ff1_micro = if pred_frames > 0.0 && gold_frames > 0.0 && inter_frames > 0.0 {
        let p = inter_frames / pred_frames;
        let r = inter_frames / gold_frames;
        2.0 * p * r / (p + r)
    } else {
        0.0
    };
    let aos_micro = if union_secs > 0.0 {
        inter_secs / union_secs
    } else {
        0.0
    };
    Ok(EvalResult {
        ff1_macro: mean(|s| s.ff1),
        aos_macro: mean(|s| s.aos),
        ff1_micro,
        aos_micro,
        n_examples: n,
        n_missing,
        per_example,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn span(s: f64, e: f64) -> TimeSpan {
        TimeSpan::new(s, e).unwrap()
    }

    fn words(s: &str) -> Vec<String> {
        s.split_whitespace().map(str::to_string).collect()
    }

    #[test]
    fn ff1_identity_and_hand_count() {
        assert_eq!(ff1(&span(1.0, 3.0), &span(1.0, 3.0), 0.02), 1.0);
        // 100 frames each, 50 overlapping.
        let v = ff1(&span(1.0, 3.0), &span(2.0, 4.0), 0.02);
        assert!((v - 0.5).abs() < 1e-12, "got {v}");
        assert_eq!(ff1(&span(0.0, 1.0), &span(2.0, 3.0), 0.02), 0.0);
    }

    #[test]
    fn ff1_zero_length_rasterization() {
        // A span below the quotient epsilon rasterizes to no frames.
        let tiny = span(1.0000000001, 1.0000000002);
        assert_eq!(crate::units::frame_range(&tiny, 0.02), None);
        assert_eq!(ff1(&tiny, &span(0.0, 2.0), 0.02), 0.0);
        assert_eq!(ff1(&span(0.0, 2.0), &tiny, 0.02), 0.0);
    }

    #[test]
    fn aos_hand_examples() {
        assert_eq!(aos(&span(1.0, 3.0), &span(1.0, 3.0)), 1.0);
        let v = aos(&span(1.0, 3.0), &span(2.0, 4.0));
        assert!((v - 1.0 / 3.0).abs() < 1e-12);
        let nested = aos(&span(2.0, 3.0), &span(1.0, 4.0));
        assert!((nested - 1.0 / 3.0).abs() < 1e-12);
        assert_eq!(aos(&span(0.0, 1.0), &span(2.0, 3.0)), 0.0);
    }

    #[test]
    fn wer_hand_examples() {
        let v = wer(&words("a b c"), &words("a x c")).unwrap();
        assert!((v - 1.0 / 3.0).abs() < 1e-12);
        let v = wer(&words("a b"), &words("a b c")).unwrap();
        assert!((v - 0.5).abs() < 1e-12);
        assert_eq!(wer(&words("a b"), &words("a b")).unwrap(), 0.0);
        assert_eq!(wer(&words("a b"), &[]).unwrap(), 1.0);
        assert!(matches!(wer(&[], &words("a")), Err(Error::EmptyReference)));
    }

    /// Exhaustive alignment: recursive minimum over delete / insert /
    /// substitute-or-match, no dynamic programming.
    fn exhaustive_edits(a: &[String], b: &[String]) -> usize {
        if a.is_empty() {
            return b.len();
        }
        if b.is_empty() {
            return a.len();
        }
        let sub = exhaustive_edits(&a[1..], &b[1..]) + usize::from(a[0] != b[0]);
        let del = exhaustive_edits(&a[1..], b) + 1;
        let ins = exhaustive_edits(a, &b[1..]) + 1;
        sub.min(del).min(ins)
    }

    #[test]
    fn wer_matches_exhaustive_alignment() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(8);
        let alphabet = ["a", "b", "c", "d"];
        for _ in 0..300 {
            let rl = rng.gen_range(1..=8);
            let hl = rng.gen_range(0..=8);
            let r: Vec<String> = (0..rl)
                .map(|_| alphabet[rng.gen_range(0..4)].to_string())
                .collect();
            let h: Vec<String> = (0..hl)
                .map(|_| alphabet[rng.gen_range(0..4)].to_string())
                .collect();
            let want = exhaustive_edits(&r, &h) as f64 / rl as f64;
            assert_eq!(wer(&r, &h).unwrap(), want);
        }
    }

    #[test]
    fn tokenize_normalizes() {
        assert_eq!(tokenize("Hello, World!"), words("hello world"));
        assert_eq!(tokenize("it's  OK."), words("it's ok"));
        assert_eq!(tokenize("  "), Vec::<String>::new());
    }

    #[test]
    fn symmetry_and_bounds() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        for _ in 0..200 {
            let a = span(rng.gen_range(0.0..5.0), rng.gen_range(5.0..10.0));
            let b = span(rng.gen_range(0.0..5.0), rng.gen_range(5.0..10.0));
            assert_eq!(aos(&a, &b), aos(&b, &a));
            assert_eq!(ff1(&a, &b, 0.02), ff1(&b, &a, 0.02));
            for v in [aos(&a, &b), ff1(&a, &b, 0.02)] {
                assert!((0.0..=1.0).contains(&v));
            }
            // IoU is bounded by the continuous Dice score.
            let inter = (a.end.min(b.end) - a.start.max(b.start)).max(0.0);
            let dice = 2.0 * inter / (a.length() + b.length());
            assert!(aos(&a, &b) <= dice + 1e-12);
            if (a.start - b.start).abs() > 1e-9 || (a.end - b.end).abs() > 1e-9 {
                assert!(aos(&a, &b) < 1.0);
            }
        }
    }

    #[test]
    fn growing_pred_toward_gold_never_decreases() {
        let gold = span(2.0, 6.0);
        let mut prev_ff1 = 0.0;
        let mut prev_aos = 0.0;
        // Fix the end at 6.0, grow the start toward 2.0 from inside.
        for i in 0..20 {
            let start = 5.8 - i as f64 * 0.2;
            let pred = span(start.max(2.0), 6.0);
            let f = ff1(&pred, &gold, 0.02);
            let a = aos(&pred, &gold);
            assert!(f >= prev_ff1 - 1e-12);
            assert!(a >= prev_aos - 1e-12);
            prev_ff1 = f;
            prev_aos = a;
        }
        assert_eq!(prev_aos, 1.0);
    }

    #[test]
    fn evaluate_exact_and_mixed() {
        let mut golds = BTreeMap::new();
        let mut preds = BTreeMap::new();
        for i in 0..4 {
            let g = span(i as f64, i as f64 + 1.0);
            golds.insert(format!("e{i}"), g);
            if i < 2 {
                preds.insert(format!("e{i}"), g);
            } else {
                preds.insert(format!("e{i}"), span(100.0 + i as f64, 101.0 + i as f64));
            }
        }
        let all_exact = evaluate(&golds, &golds, 0.02).unwrap();
        assert_eq!(all_exact.ff1_macro, 1.0);
        assert_eq!(all_exact.aos_macro, 1.0);
        let half = evaluate(&preds, &golds, 0.02).unwrap();
        assert!((half.ff1_macro - 0.5).abs() < 1e-12);
        assert!((half.aos_macro - 0.5).abs() < 1e-12);
    }

    #[test]
    fn evaluate_missing_and_orphans() {
        let mut golds = BTreeMap::new();
        golds.insert("a".to_string(), span(0.0, 1.0));
        golds.insert("b".to_string(), span(0.0, 1.0));
        let mut preds = BTreeMap::new();
        preds.insert("a".to_string(), span(0.0, 1.0));
        let r = evaluate(&preds, &golds, 0.02).unwrap();
        assert_eq!(r.n_missing, 1);
        assert!((r.ff1_macro - 0.5).abs() < 1e-12);
        assert!(r.per_example.iter().any(|s| s.missing && s.id == "b"));

        preds.insert("zz".to_string(), span(0.0, 1.0));
        assert!(matches!(
            evaluate(&preds, &golds, 0.02),
            Err(Error::IdMismatch { ids }) if ids == vec!["zz".to_string()]
        ));
    }

    #[test]
    fn evaluate_macro_matches_recompute() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(12);
        let mut golds = BTreeMap::new();
        let mut preds = BTreeMap::new();
        for i in 0..50 {
            let gs = rng.gen_range(0.0..4.0);
            let ge = gs + rng.gen_range(0.2..3.0);
            let ps = rng.gen_range(0.0..4.0);
            let pe = ps + rng.gen_range(0.2..3.0);
            golds.insert(format!("x{i}"), span(gs, ge));
            preds.insert(format!("x{i}"), span(ps, pe));
        }
        let r = evaluate(&preds, &golds, 0.02).unwrap();
        let want_ff1: f64 = golds
            .iter()
            .map(|(id, g)| ff1(&preds[id], g, 0.02))
            .sum::<f64>()
            / golds.len() as f64;
        let want_aos: f64 =
            golds.iter().map(|(id, g)| aos(&preds[id], g)).sum::<f64>() / golds.len() as f64;
        assert!((r.ff1_macro - want_ff1).abs() < 1e-12);
        assert!((r.aos_macro - want_aos).abs() < 1e-12);
    }
}
