//! Embedding assignment: how discrete units claim rows of a donor model's
//! embedding table before fine-tuning.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

use super::params::ModelParams;
use super::{ModelConfig, NUM_SPECIAL_TOKENS};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EmbedStrategy {
    /// Seeded random bijection onto the donor rows of the top-K ranking.
    MostFrequent,
    /// Seeded random bijection onto the donor rows of the bottom-K ranking.
    LeastFrequent,
    /// K donor rows drawn uniformly without replacement, any frequency.
    Random,
    /// Fresh Gaussian rows; the donor body is still transferred.
    ReInit,
    /// No donor at all: the whole network initializes randomly.
    Scratch,
}

impl std::str::FromStr for EmbedStrategy {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "most_frequent" => Ok(EmbedStrategy::MostFrequent),
            "least_frequent" => Ok(EmbedStrategy::LeastFrequent),
            "random" => Ok(EmbedStrategy::Random),
            "re_init" => Ok(EmbedStrategy::ReInit),
            "scratch" => Ok(EmbedStrategy::Scratch),
            other => Err(Error::Config(format!(
                "unknown embedding strategy {other:?} (expected most_frequent, \
                 least_frequent, random, re_init or scratch)"
            ))),
        }
    }
}

/// Builds the K unit-embedding rows from a donor table.
///
/// `freq_ranking` lists donor row ids most frequent first. Donor strategies
/// return a seeded random bijection from unit ids onto the selected rows;
/// `re_init` ignores the donor values and draws Gaussian(0, 0.02^2) rows.
/// `scratch` is handled by [`build_finetune_params`], not here.
pub fn assign_embeddings(
    donor: &Tensor,
    freq_ranking: &[u32],
    strategy: EmbedStrategy,
    k: usize,
    seed: u64,
) -> Result<Tensor> {
    let shape = donor.shape();
    if shape.len() != 2 {
        return Err(Error::Shape {
            context: "assign_embeddings".into(),
            detail: "donor table must be rank 2".into(),
        });
    }
    let (v, dim) = (shape[0], shape[1]);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rows: Vec<usize> = match strategy {
        EmbedStrategy::MostFrequent | EmbedStrategy::LeastFrequent => {
            if freq_ranking.len() < k {
                return Err(Error::Config(format!(
                    "frequency ranking covers {} donor rows, need K = {k}",
                    freq_ranking.len()
                )));
            }
            if let Some(&bad) = freq_ranking.iter().find(|&&r| r as usize >= v) {
                return Err(Error::Config(format!(
                    "ranking row {bad} outside donor table of {v} rows"
                )));
            }
            let selected: Vec<usize> = match strategy {
                EmbedStrategy::MostFrequent => {
                    freq_ranking[..k].iter().map(|&r| r as usize).collect()
                }
                _ => freq_ranking[freq_ranking.len() - k..]
                    .iter()
                    .map(|&r| r as usize)
                    .collect(),
            };
            let mut perm = selected;
            perm.shuffle(&mut rng);
            perm
        }
        EmbedStrategy::Random => {
            if v < k {
                return Err(Error::Config(format!(
                    "donor has {v} rows, need K = {k}"
                )));
            }
            // Partial Fisher-Yates: k distinct rows in random order.
            let mut all: Vec<usize> = (0..v).collect();
            for i in 0..k {
                let j = rng.gen_range(i..v);
                all.swap(i, j);
            }
            all.truncate(k);
            all
        }
        EmbedStrategy::ReInit => {
            return Ok(Tensor::randn(&[k, dim], 0.02, &mut rng));
        }
        EmbedStrategy::Scratch => {
            return Err(Error::Config(
                "scratch strategy builds a fresh model; no donor embeddings to assign".into(),
            ));
        }
    };
    let mut out = Tensor::zeros(&[k, dim]);
    for (unit, &row) in rows.iter().enumerate() {
        out.row_mut(unit).copy_from_slice(donor.row(row));
    }
    Ok(out)
}

/// Unit ids 0..k ordered by corpus frequency, most frequent first; ties
/// break toward the lower id.
pub fn frequency_ranking(sequences: &[Vec<u32>], k: usize) -> Vec<u32> {
    let mut counts = vec![0u64; k];
    for seq in sequences {
        for &u in seq {
            if (u as usize) < k {
                counts[u as usize] += 1;
            }
        }
    }
    let mut ids: Vec<u32> = (0..k as u32).collect();
    ids.sort_by(|&a, &b| counts[b as usize].cmp(&counts[a as usize]).then(a.cmp(&b)));
    ids
}

/// Assembles fine-tuning parameters for the target configuration: the donor
/// body (encoder layers, positions, final norm) plus unit embeddings chosen
/// by `strategy`, a fresh span head, and donor special-token rows. With
/// `Scratch` (or no donor) everything initializes randomly.
pub fn build_finetune_params(
    cfg: &ModelConfig,
    donor: Option<&ModelParams>,
    freq_ranking: &[u32],
    strategy: EmbedStrategy,
    seed: u64,
) -> Result<ModelParams> {
    cfg.validate()?;
    let donor = match (strategy, donor) {
        (EmbedStrategy::Scratch, _) | (_, None) => {
            if strategy != EmbedStrategy::Scratch && donor.is_none() {
                return Err(Error::Config(format!(
                    "strategy {strategy:?} needs a donor model"
                )));
            }
            return Ok(ModelParams::init(cfg, seed));
        }
        (_, Some(d)) => d,
    };
    let dc = &donor.cfg;
    if dc.layers != cfg.layers
        || dc.model_dim != cfg.model_dim
        || dc.heads != cfg.heads
        || dc.ffn_dim != cfg.ffn_dim
        || dc.max_len < cfg.max_len
    {
        return Err(Error::Config(format!(
            "donor body ({}x{} dim, {} heads, ffn {}, max_len {}) incompatible with target \
             ({}x{} dim, {} heads, ffn {}, max_len {})",
            dc.layers, dc.model_dim, dc.heads, dc.ffn_dim, dc.max_len,
            cfg.layers, cfg.model_dim, cfg.heads, cfg.ffn_dim, cfg.max_len
        )));
    }

    let k = cfg.unit_count();
    let mut params = ModelParams::init(cfg, seed ^ 0x9e3779b97f4a7c15);
    params.layers = donor.layers.clone();
    params.lnf_g = donor.lnf_g.clone();
    params.lnf_b = donor.lnf_b.clone();
    for i in 0..cfg.max_len {
        params.pos_emb.row_mut(i).copy_from_slice(donor.pos_emb.row(i));
    }

    if strategy == EmbedStrategy::ReInit {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        params.tok_emb = Tensor::randn(&[cfg.vocab_size, cfg.model_dim], 0.02, &mut rng);
    } else {
        let unit_rows = assign_embeddings(&donor.tok_emb, freq_ranking, strategy, k, seed)?;
        for u in 0..k {
            params.tok_emb.row_mut(u).copy_from_slice(unit_rows.row(u));
        }
        let donor_k = dc.unit_count();
        for s in 0..NUM_SPECIAL_TOKENS {
            params
                .tok_emb
                .row_mut(k + s)
                .copy_from_slice(donor.tok_emb.row(donor_k + s));
        }
    }
    Ok(params)
}
