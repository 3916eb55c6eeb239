//! Dataset plumbing: the JSONL manifest schema, example preparation for the
//! model (concatenation, truncation, target mapping) and a synthetic task
//! generator for end-to-end experiments.

mod synth;

pub use synth::{gen_synthetic_task, GroundTruth, SynthConfig, SynthOutput};

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cascade::{TimedTranscript, TimedWord};
use crate::error::{Error, Result};
use crate::featio::read_features;
use crate::model::{ModelConfig, ModelInput};
use crate::quantizer::{encode, Codebook};
use crate::units::{merge_repeats, time_to_index, IndexSpan, TimeSpan, UnitSequence};

/// One line of a manifest file.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ManifestRecord {
    pub id: String,
    pub question_feat: String,
    pub passage_feat: String,
    pub answer: AnswerSpan,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub transcript: Option<Vec<TimedWord>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub answer_text: Option<Vec<String>>,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct AnswerSpan {
    pub start_sec: f64,
    pub end_sec: f64,
}

/// A fully loaded example: quantized unit sequences plus the gold interval.
#[derive(Debug, Clone)]
pub struct SqaExample {
    pub id: String,
    pub question: UnitSequence,
    pub passage: UnitSequence,
    pub answer: TimeSpan,
    pub transcript: Option<TimedTranscript>,
    pub answer_text: Option<Vec<String>>,
}

/// Parses manifest records without touching feature files. Validates id
/// uniqueness and basic span sanity.
pub fn read_manifest_records(path: impl AsRef<Path>) -> Result<Vec<ManifestRecord>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut records = Vec::new();
    let mut seen = BTreeSet::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let record: ManifestRecord = serde_json::from_str(line).map_err(|e| Error::Manifest {
            path: path.into(),
            line: lineno + 1,
            detail: e.to_string(),
        })?;
        if !seen.insert(record.id.clone()) {
            return Err(Error::Manifest {
                path: path.into(),
                line: lineno + 1,
                detail: format!("duplicate id {:?}", record.id),
            });
        }
        if record.answer.start_sec < 0.0 || record.answer.start_sec >= record.answer.end_sec {
            return Err(Error::Manifest {
                path: path.into(),
                line: lineno + 1,
                detail: format!(
                    "answer requires 0 <= start_sec < end_sec, got [{}, {})",
                    record.answer.start_sec, record.answer.end_sec
                ),
            });
        }
        records.push(record);
    }
    Ok(records)
}

/// Loads a manifest and quantizes every referenced feature file through the
/// codebook. Relative feature paths resolve against the manifest directory.
pub fn load_manifest(path: impl AsRef<Path>, cb: &Codebook) -> Result<Vec<SqaExample>> {
    let path = path.as_ref();
    let records = read_manifest_records(path)?;
    let base = path.parent().unwrap_or_else(|| Path::new("."));
    records
        .par_iter()
        .map(|record| load_example(record, base, cb))
        .collect()
}

fn resolve(base: &Path, rel: &str) -> PathBuf {
    let p = Path::new(rel);
    if p.is_absolute() {
        p.into()
    } else {
        base.join(p)
    }
}

fn load_example(record: &ManifestRecord, base: &Path, cb: &Codebook) -> Result<SqaExample> {
    let q_path = resolve(base, &record.question_feat);
    let p_path = resolve(base, &record.passage_feat);
    for p in [&q_path, &p_path] {
        if !p.exists() {
            return Err(Error::MissingFile { path: p.clone() });
        }
    }
    let q_feat = read_features(&q_path)?;
    let p_feat = read_features(&p_path)?;
    let question = merge_repeats(&encode(cb, &q_feat)?, q_feat.frame_period());
    let passage = merge_repeats(&encode(cb, &p_feat)?, p_feat.frame_period());

    let answer = TimeSpan::new(record.answer.start_sec, record.answer.end_sec)?;
    let duration = passage.duration();
    if answer.end > duration + passage.frame_period() {
        return Err(Error::SpanOutOfRange {
            detail: format!(
                "example {:?}: answer ends at {}s but the passage lasts {duration}s",
                record.id, answer.end
            ),
        });
    }
    let transcript = record
        .transcript
        .clone()
        .map(TimedTranscript::new)
        .transpose()?;
    Ok(SqaExample {
        id: record.id.clone(),
        question,
        passage,
        answer,
        transcript,
        answer_text: record.answer_text.clone(),
    })
}

/// A model-ready example. `passage` keeps the full (untruncated) sequence so
/// predicted indices can convert back to time; `dropped` marks training
/// examples whose target start fell beyond the truncation cutoff.
#[derive(Debug, Clone)]
pub struct PreparedExample {
    pub id: String,
    pub input: ModelInput,
    pub passage: UnitSequence,
    pub gold: TimeSpan,
    pub passage_offset: usize,
    pub dropped: bool,
}

impl PreparedExample {
    /// Converts a predicted token-position span back to seconds.
    pub fn token_span_to_time(&self, tok: &IndexSpan) -> Result<TimeSpan> {
        if tok.start < self.passage_offset || tok.end < tok.start {
            return Err(Error::IndexOutOfRange {
                start: tok.start,
                end: tok.end,
                len: self.passage.len(),
            });
        }
        let span = IndexSpan {
            start: tok.start - self.passage_offset,
            end: tok.end - self.passage_offset,
        };
        crate::units::index_to_time(&span, &self.passage)
    }
}

/// Builds the token sequence `[BOS] q [SEP] p [EOS]`, truncating the passage
/// tail to fit `max_len`. Global attention covers BOS and the question. The
/// answer maps through the dense-index conversion into token positions; when
/// its start lands past the cutoff the example is marked dropped.
pub fn prepare(e: &SqaExample, cfg: &ModelConfig) -> Result<PreparedExample> {
    cfg.validate()?;
    let sp = cfg.specials();
    let k = cfg.unit_count() as u32;
    let q = e.question.units();
    let p = e.passage.units();
    for &u in q.iter().chain(p) {
        if u >= k {
            return Err(Error::UnitOutOfRange {
                unit: u,
                alphabet: k as usize,
            });
        }
    }
    if q.len() + 4 > cfg.max_len {
        return Err(Error::QuestionTooLong {
            len: q.len(),
            budget: cfg.max_len - 4,
        });
    }
    let keep = p.len().min(cfg.max_len - 3 - q.len());
    let passage_offset = q.len() + 2;
    let n = passage_offset + keep + 1;

    let mut tokens = Vec::with_capacity(n);
    tokens.push(sp.bos);
    tokens.extend_from_slice(q);
    tokens.push(sp.sep);
    tokens.extend_from_slice(&p[..keep]);
    tokens.push(sp.eos);

    let mut global = vec![false; n];
    global[0] = true;
    for g in global.iter_mut().take(q.len() + 1).skip(1) {
        *g = true;
    }
    let mut passage_mask = vec![false; n];
    for m in passage_mask.iter_mut().skip(passage_offset).take(keep) {
        *m = true;
    }

    let gold_idx = time_to_index(&e.answer, &e.passage)?;
    let (target, dropped) = if gold_idx.start >= keep {
        (None, true)
    } else {
        (
            Some(IndexSpan {
                start: passage_offset + gold_idx.start,
                end: passage_offset + gold_idx.end.min(keep - 1),
            }),
            false,
        )
    };

    let input = ModelInput::new(tokens, passage_mask, global, target)?;
    Ok(PreparedExample {
        id: e.id.clone(),
        input,
        passage: e.passage.clone(),
        gold: e.answer,
        passage_offset,
        dropped,
    })
}
