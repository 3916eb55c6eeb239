//! Simulated cascade baseline: a calibrated noise channel standing in for an
//! ASR system, an edit-distance matcher standing in for a text QA model, and
//! the WER-bucket analysis comparing the cascade against the textless path.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::units::TimeSpan;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimedWord {
    pub text: String,
    pub start: f64,
    pub end: f64,
}

/// A word-level transcript with time alignments; words are temporally
/// ordered and non-overlapping.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimedTranscript {
    words: Vec<TimedWord>,
}

impl TimedTranscript {
    pub fn new(words: Vec<TimedWord>) -> Result<Self> {
        for w in &words {
            if !(w.start.is_finite() && w.end.is_finite() && w.start < w.end && w.start >= 0.0) {
                return Err(Error::InvalidSpan {
                    start: w.start,
                    end: w.end,
                    detail: format!("word {:?}", w.text),
                });
            }
        }
        for pair in words.windows(2) {
            if pair[1].start < pair[0].end {
                return Err(Error::Shape {
                    context: "TimedTranscript".into(),
                    detail: format!(
                        "words {:?} and {:?} overlap",
                        pair[0].text, pair[1].text
                    ),
                });
            }
        }
        Ok(TimedTranscript { words })
    }

    pub fn words(&self) -> &[TimedWord] {
        &self.words
    }

    pub fn texts(&self) -> Vec<String> {
        self.words.iter().map(|w| w.text.clone()).collect()
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }
}

/// Noise channel configuration. `target_wer` is the per-word corruption
/// probability; the mix splits corruption among substitution, deletion and
/// insertion and must sum to 1.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub target_wer: f64,
    pub p_sub: f64,
    pub p_del: f64,
    pub p_ins: f64,
    pub vocabulary: Vec<String>,
    pub seed: u64,
}

impl NoiseSpec {
    pub fn validate(&self) -> Result<()> {
        let in_unit = |v: f64| (0.0..=1.0).contains(&v);
        if !in_unit(self.target_wer) {
            return Err(Error::Config(format!(
                "target_wer must be in [0,1], got {}",
                self.target_wer
            )));
        }
        if !(in_unit(self.p_sub) && in_unit(self.p_del) && in_unit(self.p_ins)) {
            return Err(Error::Config("noise mix probabilities must be in [0,1]".into()));
        }
        let sum = self.p_sub + self.p_del + self.p_ins;
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::Config(format!(
                "noise mix must sum to 1, got {sum}"
            )));
        }
        if self.target_wer > 0.0 && self.vocabulary.is_empty() && self.p_sub + self.p_ins > 0.0 {
            return Err(Error::Config(
                "substitutions/insertions need a non-empty vocabulary".into(),
            ));
        }
        Ok(())
    }
}

/// Applies per-word independent corruption. Substitutions keep the original
/// word's timing; an insertion splits the preceding word's interval in half.
pub fn corrupt(t: &TimedTranscript, spec: &NoiseSpec) -> Result<TimedTranscript> {
    spec.validate()?;
    if spec.target_wer == 0.0 {
        return Ok(t.clone());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let q = spec.target_wer;
    let mut out: Vec<TimedWord> = Vec::with_capacity(t.words.len());
    for w in &t.words {
        let u: f64 = rng.gen();
        if u < q * spec.p_sub {
            out.push(TimedWord {
                text: draw_distinct(&spec.vocabulary, &w.text, &mut rng),
                start: w.start,
                end: w.end,
            });
        } else if u < q * (spec.p_sub + spec.p_del) {
            // Deleted: interval becomes silence.
        } else if u < q {
            let mid = 0.5 * (w.start + w.end);
            out.push(TimedWord {
                text: w.text.clone(),
                start: w.start,
                end: mid,
            });
            out.push(TimedWord {
                text: spec.vocabulary[rng.gen_range(0..spec.vocabulary.len())].clone(),
                start: mid,
                end: w.end,
            });
        } else {
            out.push(w.clone());
        }
    }
    TimedTranscript::new(out)
}

fn draw_distinct(vocabulary: &[String], avoid: &str, rng: &mut ChaCha8Rng) -> String {
    for _ in 0..64 {
        let w = &vocabulary[rng.gen_range(0..vocabulary.len())];
        if w != avoid {
            return w.clone();
        }
    }
    // Degenerate vocabulary; accept the collision.
    vocabulary[rng.gen_range(0..vocabulary.len())].clone()
}

/// Finds the contiguous word window minimizing word-level edit distance to
/// the answer phrase; ties break to the earliest start, then shortest window.
/// Returns the window's time extent.
pub fn oracle_qa(passage: &TimedTranscript, answer_phrase: &[String]) -> Result<TimeSpan> {
    if passage.is_empty() {
        return Err(Error::Config("oracle_qa requires a non-empty passage".into()));
    }
    if answer_phrase.is_empty() {
        return Err(Error::Config("oracle_qa requires a non-empty answer phrase".into()));
    }
    let words = passage.texts();
    let n = words.len();
    let mut best: Option<(usize, usize, usize)> = None; // (dist, start, len)
    for start in 0..n {
        for len in 1..=(n - start) {
            let window = &words[start..start + len];
            let dist = edit_distance(window, answer_phrase);
            let better = match best {
                None => true,
                Some((bd, _, _)) => dist < bd,
            };
            if better {
                best = Some((dist, start, len));
            }
        }
    }
    let (_, start, len) = best.expect("passage non-empty");
    TimeSpan::new(
        passage.words[start].start,
        passage.words[start + len - 1].end,
    )
}

fn edit_distance(a: &[String], b: &[String]) -> usize {
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

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BucketExample {
    pub realized_wer: f64,
    pub ff1_cascade: f64,
    pub ff1_dual: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BucketRow {
    pub lo: f64,
    pub hi: f64,
    pub n: usize,
    pub ff1_cascade: f64,
    pub ff1_dual: f64,
}

/// Groups examples into half-open WER buckets `[edges[i], edges[i+1])` and
/// reports per-bucket mean FF1 for both systems. Empty buckets are omitted.
pub fn bucket_analysis(examples: &[BucketExample], edges: &[f64]) -> Result<Vec<BucketRow>> {
    if edges.len() < 2 {
        return Err(Error::Config("need at least two bucket edges".into()));
    }
    if edges.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Config(format!("bucket edges must be ascending: {edges:?}")));
    }
    let lo = edges[0];
    let hi = *edges.last().expect("len >= 2");
    let mut sums = vec![(0usize, 0.0f64, 0.0f64); edges.len() - 1];
    for ex in examples {
        if ex.realized_wer < lo || ex.realized_wer >= hi {
            return Err(Error::Config(format!(
                "realized WER {} outside bucket range [{lo}, {hi})",
                ex.realized_wer
            )));
        }
        let b = edges
            .windows(2)
            .position(|w| ex.realized_wer >= w[0] && ex.realized_wer < w[1])
            .expect("covered by range check");
        sums[b].0 += 1;
        sums[b].1 += ex.ff1_cascade;
        sums[b].2 += ex.ff1_dual;
    }
    Ok(sums
        .into_iter()
        .enumerate()
        .filter(|(_, (n, _, _))| *n > 0)
        .map(|(i, (n, c, d))| BucketRow {
            lo: edges[i],
            hi: edges[i + 1],
            n,
            ff1_cascade: c / n as f64,
            ff1_dual: d / n as f64,
        })
        .collect())
}

/// Default Figure-style bucket edges: 10-point bins from 0 to 70% WER.
pub fn default_bucket_edges() -> Vec<f64> {
    (0..=7).map(|i| i as f64 * 0.1).collect()
}
