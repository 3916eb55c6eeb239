//! Sparse-attention transformer encoder for span prediction over discrete
//! unit sequences: local windowed attention plus designated global tokens,
//! a two-track span head, and analytic gradients for every parameter.

mod backward;
mod checkpoint;
mod embed;
mod forward;
mod mlm;
mod params;
mod span;

pub use backward::{backward, backward_train};
pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, TNSR_MAGIC, TNSR_VERSION};
pub use embed::{assign_embeddings, build_finetune_params, frequency_ranking, EmbedStrategy};
pub use forward::forward;
pub use mlm::{
    build_pretrain_example, mask_tokens, mlm_loss, mlm_loss_and_grads, MaskedExample,
    MLM_MASK_PROB,
};
pub use params::{LayerParams, ModelParams};
pub use span::{decode_span, span_loss, span_loss_grad};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::units::IndexSpan;

/// Number of reserved token ids above the unit alphabet.
pub const NUM_SPECIAL_TOKENS: usize = 4;

/// Reserved token ids, laid out directly above the K unit ids.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SpecialTokens {
    pub bos: u32,
    pub sep: u32,
    pub eos: u32,
    pub mask: u32,
}

impl SpecialTokens {
    pub fn for_unit_count(k: usize) -> Self {
        SpecialTokens {
            bos: k as u32,
            sep: k as u32 + 1,
            eos: k as u32 + 2,
            mask: k as u32 + 3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub vocab_size: usize,
    pub max_len: usize,
    pub layers: usize,
    pub model_dim: usize,
    pub heads: usize,
    pub ffn_dim: usize,
    /// One-sided local attention window.
    pub local_window: usize,
    pub dropout: f64,
}

impl ModelConfig {
    /// Desk-scale defaults for a unit alphabet of size `k`.
    pub fn for_units(k: usize) -> Self {
        ModelConfig {
            vocab_size: k + NUM_SPECIAL_TOKENS,
            max_len: 512,
            layers: 4,
            model_dim: 128,
            heads: 4,
            ffn_dim: 512,
            local_window: 32,
            dropout: 0.1,
        }
    }

    pub fn unit_count(&self) -> usize {
        self.vocab_size - NUM_SPECIAL_TOKENS
    }

    pub fn specials(&self) -> SpecialTokens {
        SpecialTokens::for_unit_count(self.unit_count())
    }

    pub fn head_dim(&self) -> usize {
        self.model_dim / self.heads
    }

    pub fn validate(&self) -> Result<()> {
        if self.model_dim == 0 || self.heads == 0 || self.model_dim % self.heads != 0 {
            return Err(Error::Config(format!(
                "model_dim {} must be a positive multiple of heads {}",
                self.model_dim, self.heads
            )));
        }
        if self.max_len < self.local_window {
            return Err(Error::Config(format!(
                "max_len {} must be >= local_window {}",
                self.max_len, self.local_window
            )));
        }
        if self.vocab_size < NUM_SPECIAL_TOKENS + 1 {
            return Err(Error::Config(format!(
                "vocab_size {} leaves no room for unit ids",
                self.vocab_size
            )));
        }
        if self.layers == 0 || self.ffn_dim == 0 || self.max_len == 0 {
            return Err(Error::Config("layers, ffn_dim and max_len must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config(format!(
                "dropout must be in [0,1), got {}",
                self.dropout
            )));
        }
        Ok(())
    }
}

/// One prepared example: token sequence plus the masks that drive sparse
/// attention and span scoring. The optional target is in token positions.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelInput {
    tokens: Vec<u32>,
    passage_mask: Vec<bool>,
    global_mask: Vec<bool>,
    target: Option<IndexSpan>,
}

impl ModelInput {
    pub fn new(
        tokens: Vec<u32>,
        passage_mask: Vec<bool>,
        global_mask: Vec<bool>,
        target: Option<IndexSpan>,
    ) -> Result<Self> {
        let n = tokens.len();
        if passage_mask.len() != n || global_mask.len() != n {
            return Err(Error::Shape {
                context: "ModelInput".into(),
                detail: "mask lengths must match token length".into(),
            });
        }
        if passage_mask
            .iter()
            .zip(&global_mask)
            .any(|(&p, &g)| p && g)
        {
            return Err(Error::Shape {
                context: "ModelInput".into(),
                detail: "passage_mask and global_mask must be disjoint".into(),
            });
        }
        if let Some(t) = &target {
            let inside = t.start <= t.end
                && t.end < n
                && passage_mask[t.start]
                && passage_mask[t.end];
            if !inside {
                return Err(Error::Shape {
                    context: "ModelInput".into(),
                    detail: format!("target ({}, {}) outside passage region", t.start, t.end),
                });
            }
        }
        Ok(ModelInput {
            tokens,
            passage_mask,
            global_mask,
            target,
        })
    }

    pub fn tokens(&self) -> &[u32] {
        &self.tokens
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn passage_mask(&self) -> &[bool] {
        &self.passage_mask
    }

    pub fn global_mask(&self) -> &[bool] {
        &self.global_mask
    }

    pub fn target(&self) -> Option<IndexSpan> {
        self.target
    }

    pub fn with_target(mut self, target: Option<IndexSpan>) -> Result<Self> {
        self.target = None;
        Self::new(self.tokens, self.passage_mask, self.global_mask, target)
    }
}
