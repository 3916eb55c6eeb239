//! Parameter container. The same structure doubles as the gradient
//! container: gradients of a parameter set have identical shapes.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::tensor::Tensor;

use super::ModelConfig;

const INIT_STD: f64 = 0.02;

#[derive(Debug, Clone, PartialEq)]
pub struct LayerParams {
    pub ln1_g: Tensor,
    pub ln1_b: Tensor,
    pub wq: Tensor,
    pub bq: Tensor,
    pub wk: Tensor,
    pub bk: Tensor,
    pub wv: Tensor,
    pub bv: Tensor,
    pub wo: Tensor,
    pub bo: Tensor,
    pub ln2_g: Tensor,
    pub ln2_b: Tensor,
    pub w1: Tensor,
    pub b1: Tensor,
    pub w2: Tensor,
    pub b2: Tensor,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub cfg: ModelConfig,
    pub tok_emb: Tensor,
    pub pos_emb: Tensor,
    pub layers: Vec<LayerParams>,
    pub lnf_g: Tensor,
    pub lnf_b: Tensor,
    pub span_w: Tensor,
    pub span_b: Tensor,
    /// Output bias for masked-unit prediction (tied to `tok_emb`).
    pub mlm_bias: Tensor,
}

impl ModelParams {
    /// Random initialization: Gaussian(0, 0.02^2) weights, zero biases,
    /// unit layer-norm gains.
    pub fn init(cfg: &ModelConfig, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = cfg.model_dim;
        let f = cfg.ffn_dim;
        let layers = (0..cfg.layers)
            .map(|_| LayerParams {
                ln1_g: Tensor::full(&[d], 1.0),
                ln1_b: Tensor::zeros(&[d]),
                wq: Tensor::randn(&[d, d], INIT_STD, &mut rng),
                bq: Tensor::zeros(&[d]),
                wk: Tensor::randn(&[d, d], INIT_STD, &mut rng),
                bk: Tensor::zeros(&[d]),
                wv: Tensor::randn(&[d, d], INIT_STD, &mut rng),
                bv: Tensor::zeros(&[d]),
                wo: Tensor::randn(&[d, d], INIT_STD, &mut rng),
                bo: Tensor::zeros(&[d]),
                ln2_g: Tensor::full(&[d], 1.0),
                ln2_b: Tensor::zeros(&[d]),
                w1: Tensor::randn(&[d, f], INIT_STD, &mut rng),
                b1: Tensor::zeros(&[f]),
                w2: Tensor::randn(&[f, d], INIT_STD, &mut rng),
                b2: Tensor::zeros(&[d]),
            })
            .collect();
        ModelParams {
            cfg: *cfg,
            tok_emb: Tensor::randn(&[cfg.vocab_size, d], INIT_STD, &mut rng),
            pos_emb: Tensor::randn(&[cfg.max_len, d], INIT_STD, &mut rng),
            layers,
            lnf_g: Tensor::full(&[d], 1.0),
            lnf_b: Tensor::zeros(&[d]),
            span_w: Tensor::randn(&[d, 2], INIT_STD, &mut rng),
            span_b: Tensor::zeros(&[2]),
            mlm_bias: Tensor::zeros(&[cfg.vocab_size]),
        }
    }

    /// All-zero tensors with this parameter set's shapes; the gradient
    /// accumulator.
    pub fn zeros_like(&self) -> Self {
        ModelParams {
            cfg: self.cfg,
            tok_emb: self.tok_emb.zeros_like(),
            pos_emb: self.pos_emb.zeros_like(),
            layers: self
                .layers
                .iter()
                .map(|l| LayerParams {
                    ln1_g: l.ln1_g.zeros_like(),
                    ln1_b: l.ln1_b.zeros_like(),
                    wq: l.wq.zeros_like(),
                    bq: l.bq.zeros_like(),
                    wk: l.wk.zeros_like(),
                    bk: l.bk.zeros_like(),
                    wv: l.wv.zeros_like(),
                    bv: l.bv.zeros_like(),
                    wo: l.wo.zeros_like(),
                    bo: l.bo.zeros_like(),
                    ln2_g: l.ln2_g.zeros_like(),
                    ln2_b: l.ln2_b.zeros_like(),
                    w1: l.w1.zeros_like(),
                    b1: l.b1.zeros_like(),
                    w2: l.w2.zeros_like(),
                    b2: l.b2.zeros_like(),
                })
                .collect(),
            lnf_g: self.lnf_g.zeros_like(),
            lnf_b: self.lnf_b.zeros_like(),
            span_w: self.span_w.zeros_like(),
            span_b: self.span_b.zeros_like(),
            mlm_bias: self.mlm_bias.zeros_like(),
        }
    }

    pub fn named_tensors(&self) -> Vec<(String, &Tensor)> {
        let mut out: Vec<(String, &Tensor)> = vec![
            ("tok_emb".into(), &self.tok_emb),
            ("pos_emb".into(), &self.pos_emb),
        ];
        for (i, l) in self.layers.iter().enumerate() {
            out.push((format!("layers.{i}.ln1_g"), &l.ln1_g));
            out.push((format!("layers.{i}.ln1_b"), &l.ln1_b));
            out.push((format!("layers.{i}.wq"), &l.wq));
            out.push((format!("layers.{i}.bq"), &l.bq));
            out.push((format!("layers.{i}.wk"), &l.wk));
            out.push((format!("layers.{i}.bk"), &l.bk));
            out.push((format!("layers.{i}.wv"), &l.wv));
            out.push((format!("layers.{i}.bv"), &l.bv));
            out.push((format!("layers.{i}.wo"), &l.wo));
            out.push((format!("layers.{i}.bo"), &l.bo));
            out.push((format!("layers.{i}.ln2_g"), &l.ln2_g));
            out.push((format!("layers.{i}.ln2_b"), &l.ln2_b));
            out.push((format!("layers.{i}.w1"), &l.w1));
            out.push((format!("layers.{i}.b1"), &l.b1));
            out.push((format!("layers.{i}.w2"), &l.w2));
            out.push((format!("layers.{i}.b2"), &l.b2));
        }
        out.push(("lnf_g".into(), &self.lnf_g));
        out.push(("lnf_b".into(), &self.lnf_b));
        out.push(("span_w".into(), &self.span_w));
        out.push(("span_b".into(), &self.span_b));
        out.push(("mlm_bias".into(), &self.mlm_bias));
        out
    }

    pub fn named_tensors_mut(&mut self) -> Vec<(String, &mut Tensor)> {
        let ModelParams {
            cfg: _,
            tok_emb,
            pos_emb,
            layers,
            lnf_g,
            lnf_b,
            span_w,
            span_b,
            mlm_bias,
        } = self;
        let mut out: Vec<(String, &mut Tensor)> =
            vec![("tok_emb".into(), tok_emb), ("pos_emb".into(), pos_emb)];
        for (i, l) in layers.iter_mut().enumerate() {
            let LayerParams {
                ln1_g,
                ln1_b,
                wq,
                bq,
                wk,
                bk,
                wv,
                bv,
                wo,
                bo,
                ln2_g,
                ln2_b,
                w1,
                b1,
                w2,
                b2,
            } = l;
            out.push((format!("layers.{i}.ln1_g"), ln1_g));
            out.push((format!("layers.{i}.ln1_b"), ln1_b));
            out.push((format!("layers.{i}.wq"), wq));
            out.push((format!("layers.{i}.bq"), bq));
            out.push((format!("layers.{i}.wk"), wk));
            out.push((format!("layers.{i}.bk"), bk));
            out.push((format!("layers.{i}.wv"), wv));
            out.push((format!("layers.{i}.bv"), bv));
            out.push((format!("layers.{i}.wo"), wo));
            out.push((format!("layers.{i}.bo"), bo));
            out.push((format!("layers.{i}.ln2_g"), ln2_g));
            out.push((format!("layers.{i}.ln2_b"), ln2_b));
            out.push((format!("layers.{i}.w1"), w1));
            out.push((format!("layers.{i}.b1"), b1));
            out.push((format!("layers.{i}.w2"), w2));
            out.push((format!("layers.{i}.b2"), b2));
        }
        out.push(("lnf_g".into(), lnf_g));
        out.push(("lnf_b".into(), lnf_b));
        out.push(("span_w".into(), span_w));
        out.push(("span_b".into(), span_b));
        out.push(("mlm_bias".into(), mlm_bias));
        out
    }

    pub fn n_params(&self) -> usize {
        self.named_tensors().iter().map(|(_, t)| t.len()).sum()
    }

    pub fn all_finite(&self) -> bool {
        self.named_tensors().iter().all(|(_, t)| t.all_finite())
    }

    /// Accumulate `alpha * other` into self (used to sum per-example grads).
    pub fn accumulate(&mut self, other: &Self, alpha: f64) {
        let mine = self.named_tensors_mut();
        let theirs = other.named_tensors();
        for ((_, a), (_, b)) in mine.into_iter().zip(theirs) {
            crate::tensor::axpy(a.data_mut(), alpha, b.data());
        }
    }

    /// Global L2 norm over every tensor.
    pub fn global_norm(&self) -> f64 {
        self.named_tensors()
            .iter()
            .map(|(_, t)| t.data().iter().map(|v| v * v).sum::<f64>())
            .sum::<f64>()
            .sqrt()
    }

    pub fn scale(&mut self, factor: f64) {
        for (_, t) in self.named_tensors_mut() {
            for v in t.data_mut() {
                *v *= factor;
            }
        }
    }

    pub fn quantize_f32(&mut self) {
        for (_, t) in self.named_tensors_mut() {
            t.quantize_f32();
        }
    }
}
