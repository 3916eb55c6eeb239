//! Synthetic task generator: a symbolic lexicon over discrete units, zipfian
//! passages, pattern-matching questions, and frame-level features with known
//! ground truth. Lets the full pipeline run and be scored without any
//! external speech model or corpus.

use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::cascade::TimedWord;
use crate::error::{Error, Result};
use crate::featio::{synth_features_with_period, write_features, Anchors};

use super::{AnswerSpan, ManifestRecord};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SynthConfig {
    /// Lexicon size; each word is a fixed short unit-id string.
    pub vocab_words: usize,
    pub units_per_word: usize,
    /// Unit alphabet size (also the anchor count).
    pub k: usize,
    pub n_train: usize,
    pub n_dev: usize,
    pub passage_words: usize,
    /// Length of the queried word pattern; the answer is its time interval.
    pub answer_words: usize,
    /// Per-unit frame repetition range (simulated duration), inclusive.
    pub repeat_min: u32,
    pub repeat_max: u32,
    pub noise_sigma: f64,
    pub dim: usize,
    pub seed: u64,
    /// Word frequencies follow rank^-exponent.
    pub zipf_exponent: f64,
    pub frame_period_us: u32,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            vocab_words: 50,
            units_per_word: 3,
            k: 64,
            n_train: 2000,
            n_dev: 200,
            passage_words: 20,
            answer_words: 2,
            repeat_min: 1,
            repeat_max: 3,
            noise_sigma: 0.03,
            dim: 16,
            seed: 0,
            zipf_exponent: 1.0,
            frame_period_us: crate::featio::DEFAULT_FRAME_PERIOD_US,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.vocab_words == 0 || self.units_per_word == 0 || self.passage_words == 0 {
            return Err(Error::Config("vocab, word length and passage length must be positive".into()));
        }
        if self.k < 2 {
            return Err(Error::Config("unit alphabet needs k >= 2".into()));
        }
        if self.answer_words == 0 || self.answer_words > self.passage_words {
            return Err(Error::Config(format!(
                "answer_words {} must be in 1..=passage_words {}",
                self.answer_words, self.passage_words
            )));
        }
        if self.repeat_min == 0 || self.repeat_min > self.repeat_max {
            return Err(Error::Config(format!(
                "repeat range {}..={} invalid",
                self.repeat_min, self.repeat_max
            )));
        }
        if self.noise_sigma < 0.0 || self.dim == 0 {
            return Err(Error::Config("noise_sigma must be >= 0 and dim positive".into()));
        }
        if self.n_train + self.n_dev == 0 {
            return Err(Error::Config("no examples requested".into()));
        }
        Ok(())
    }

    pub fn frame_period(&self) -> f64 {
        self.frame_period_us as f64 * 1e-6
    }
}

/// Per-example ground truth retained in memory for verification.
#[derive(Debug, Clone)]
pub struct GroundTruth {
    pub id: String,
    pub question_frames: Vec<u32>,
    pub passage_frames: Vec<u32>,
    pub passage_word_ids: Vec<usize>,
    pub answer_word_pos: usize,
}

#[derive(Debug)]
pub struct SynthOutput {
    pub train_manifest: PathBuf,
    pub dev_manifest: PathBuf,
    pub meta_path: PathBuf,
    pub lexicon: Vec<Vec<u32>>,
    pub anchors: Anchors,
    pub ground_truth: Vec<GroundTruth>,
}

/// Generates the dataset under `out_dir`: FEAT files in `features/`,
/// `train.jsonl` and `dev.jsonl` manifests, and a `meta.json` record of the
/// configuration. Byte-identical for identical configs.
pub fn gen_synthetic_task(cfg: &SynthConfig, out_dir: impl AsRef<Path>) -> Result<SynthOutput> {
    cfg.validate()?;
    let out_dir = out_dir.as_ref();
    let feat_dir = out_dir.join("features");
    std::fs::create_dir_all(&feat_dir).map_err(|e| Error::io(&feat_dir, e))?;

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let min_dist = if cfg.k <= 128 { 0.3 } else { 0.15 };
    let anchors = Anchors::random(cfg.k, cfg.dim, min_dist, rng.gen())?;
    let lexicon = build_lexicon(cfg, &mut rng)?;
    let zipf_cdf = zipf_cdf(cfg.vocab_words, cfg.zipf_exponent);
    let period = cfg.frame_period();

    let total = cfg.n_train + cfg.n_dev;
    let mut records = Vec::with_capacity(total);
    let mut truths = Vec::with_capacity(total);
    for i in 0..total {
        let id = format!("ex{i:05}");
        let (word_ids, ans_pos) = sample_passage(cfg, &lexicon, &zipf_cdf, &mut rng)?;

        // Realize frame-level units with random per-unit repetition.
        let mut passage_frames: Vec<u32> = Vec::new();
        let mut word_bounds = Vec::with_capacity(word_ids.len());
        for &w in &word_ids {
            let start = passage_frames.len();
            for &u in &lexicon[w] {
                let reps = rng.gen_range(cfg.repeat_min..=cfg.repeat_max);
                passage_frames.extend(std::iter::repeat(u).take(reps as usize));
            }
            word_bounds.push((start, passage_frames.len()));
        }
        let answer = AnswerSpan {
            start_sec: word_bounds[ans_pos].0 as f64 * period,
            end_sec: word_bounds[ans_pos + cfg.answer_words - 1].1 as f64 * period,
        };

        let mut question_frames: Vec<u32> = Vec::new();
        for &w in &word_ids[ans_pos..ans_pos + cfg.answer_words] {
            for &u in &lexicon[w] {
                let reps = rng.gen_range(cfg.repeat_min..=cfg.repeat_max);
                question_frames.extend(std::iter::repeat(u).take(reps as usize));
            }
        }

        let q_seed: u64 = rng.gen();
        let p_seed: u64 = rng.gen();
        let q_feat = synth_features_with_period(
            &question_frames,
            &anchors,
            cfg.noise_sigma,
            q_seed,
            cfg.frame_period_us,
        )?;
        let p_feat = synth_features_with_period(
            &passage_frames,
            &anchors,
            cfg.noise_sigma,
            p_seed,
            cfg.frame_period_us,
        )?;
        let q_rel = format!("features/{id}_q.feat");
        let p_rel = format!("features/{id}_p.feat");
        write_features(&q_feat, out_dir.join(&q_rel))?;
        write_features(&p_feat, out_dir.join(&p_rel))?;

        let transcript: Vec<TimedWord> = word_ids
            .iter()
            .zip(&word_bounds)
            .map(|(&w, &(s, e))| TimedWord {
                text: word_text(w),
                start: s as f64 * period,
                end: e as f64 * period,
            })
            .collect();
        let answer_text: Vec<String> = word_ids[ans_pos..ans_pos + cfg.answer_words]
            .iter()
            .map(|&w| word_text(w))
            .collect();

        records.push(ManifestRecord {
            id: id.clone(),
            question_feat: q_rel,
            passage_feat: p_rel,
            answer,
            transcript: Some(transcript),
            answer_text: Some(answer_text),
        });
        truths.push(GroundTruth {
            id,
            question_frames,
            passage_frames,
            passage_word_ids: word_ids,
            answer_word_pos: ans_pos,
        });
    }

    let train_manifest = out_dir.join("train.jsonl");
    let dev_manifest = out_dir.join("dev.jsonl");
    write_manifest(&train_manifest, &records[..cfg.n_train])?;
    write_manifest(&dev_manifest, &records[cfg.n_train..])?;

    let meta_path = out_dir.join("meta.json");
    let meta = serde_json::json!({
        "generator": "synthetic-sqa",
        "config": cfg,
    });
    std::fs::write(&meta_path, serde_json::to_string_pretty(&meta).expect("meta"))
        .map_err(|e| Error::io(&meta_path, e))?;

    Ok(SynthOutput {
        train_manifest,
        dev_manifest,
        meta_path,
        lexicon,
        anchors,
        ground_truth: truths,
    })
}

pub(crate) fn word_text(idx: usize) -> String {
    format!("w{idx:03}")
}

fn write_manifest(path: &Path, records: &[ManifestRecord]) -> Result<()> {
    let mut out = String::new();
    for r in records {
        out.push_str(&serde_json::to_string(r).expect("record serializes"));
        out.push('\n');
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Words are unit strings without adjacent duplicates, unique across the
/// lexicon.
fn build_lexicon(cfg: &SynthConfig, rng: &mut ChaCha8Rng) -> Result<Vec<Vec<u32>>> {
    let mut lexicon: Vec<Vec<u32>> = Vec::with_capacity(cfg.vocab_words);
    let mut attempts = 0;
    while lexicon.len() < cfg.vocab_words {
        attempts += 1;
        if attempts > 1000 * cfg.vocab_words {
            return Err(Error::Config(format!(
                "cannot build {} distinct words of {} units over alphabet {}",
                cfg.vocab_words, cfg.units_per_word, cfg.k
            )));
        }
        let mut word = Vec::with_capacity(cfg.units_per_word);
        for _ in 0..cfg.units_per_word {
            loop {
                let u = rng.gen_range(0..cfg.k as u32);
                if word.last() != Some(&u) {
                    word.push(u);
                    break;
                }
            }
        }
        if !lexicon.contains(&word) {
            lexicon.push(word);
        }
    }
    Ok(lexicon)
}

fn zipf_cdf(n: usize, exponent: f64) -> Vec<f64> {
    let weights: Vec<f64> = (0..n).map(|i| 1.0 / ((i + 1) as f64).powf(exponent)).collect();
    let total: f64 = weights.iter().sum();
    let mut acc = 0.0;
    weights
        .iter()
        .map(|w| {
            acc += w / total;
            acc
        })
        .collect()
}

fn sample_zipf(cdf: &[f64], rng: &mut ChaCha8Rng) -> usize {
    let u: f64 = rng.gen();
    cdf.iter().position(|&c| u < c).unwrap_or(cdf.len() - 1)
}

/// Draws a passage whose answer pattern occurs exactly once at word level.
/// Adjacent words never share a boundary unit, so run-length merging keeps
/// word boundaries aligned with dense-unit boundaries and the answer
/// interval converts to indices exactly.
fn sample_passage(
    cfg: &SynthConfig,
    lexicon: &[Vec<u32>],
    cdf: &[f64],
    rng: &mut ChaCha8Rng,
) -> Result<(Vec<usize>, usize)> {
    for _ in 0..100 {
        let mut words: Vec<usize> = Vec::with_capacity(cfg.passage_words);
        for pos in 0..cfg.passage_words {
            let mut tries = 0;
            loop {
                let w = sample_zipf(cdf, rng);
                let collides = pos > 0
                    && lexicon[words[pos - 1]].last() == lexicon[w].first();
                tries += 1;
                if !collides || tries > 64 {
                    words.push(w);
                    break;
                }
            }
        }
        let ans_pos = rng.gen_range(0..=cfg.passage_words - cfg.answer_words);
        let pattern = &words[ans_pos..ans_pos + cfg.answer_words];
        let occurrences = words
            .windows(cfg.answer_words)
            .filter(|w| *w == pattern)
            .count();
        if occurrences == 1 {
            return Ok((words, ans_pos));
        }
    }
    Err(Error::Config(
        "could not draw a passage with a unique answer pattern; \
         increase vocab_words or shorten passages"
            .into(),
    ))
}
