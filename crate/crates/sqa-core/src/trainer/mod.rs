//! Optimization loop: linear warmup / linear decay schedule, adaptive-moment
//! updates with decoupled weight decay, global-norm clipping, validation
//! tracking, and resumable checkpoints.
//!
//! Determinism contract: batch composition and dropout are pure functions of
//! (seed, step), gradients accumulate in example order, and parameters plus
//! optimizer moments stay f32-representable, so identically-seeded runs and
//! checkpoint resumes are bitwise identical regardless of worker count.

mod grad_check;

pub use grad_check::{grad_check, grad_check_filtered};

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::PreparedExample;
use crate::error::{Error, Result};
use crate::metrics::ff1;
use crate::model::{
    backward_train, build_pretrain_example, decode_span, forward, load_checkpoint,
    mlm_loss_and_grads, save_checkpoint, ModelInput, ModelParams,
};
use crate::tensor::Tensor;

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub peak_lr: f64,
    pub warmup_steps: usize,
    pub total_steps: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub weight_decay: f64,
    pub grad_clip: f64,
    pub eval_every: usize,
    /// Longest span (in dense units) the validation decoder may emit.
    pub max_answer_len: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            peak_lr: 3e-4,
            warmup_steps: 500,
            total_steps: 5000,
            batch_size: 16,
            seed: 0,
            weight_decay: 0.01,
            grad_clip: 1.0,
            eval_every: 100,
            max_answer_len: 64,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.peak_lr > 0.0) {
            return Err(Error::Config(format!("peak_lr must be > 0, got {}", self.peak_lr)));
        }
        if self.warmup_steps >= self.total_steps {
            return Err(Error::Config(format!(
                "warmup_steps {} must be < total_steps {}",
                self.warmup_steps, self.total_steps
            )));
        }
        if self.batch_size == 0 || self.eval_every == 0 || self.max_answer_len == 0 {
            return Err(Error::Config(
                "batch_size, eval_every and max_answer_len must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// Linear warmup to the peak at `warmup_steps`, then linear decay to zero
/// at `total_steps`.
pub fn lr_at(step: usize, cfg: &TrainConfig) -> f64 {
    let step = step.min(cfg.total_steps);
    if cfg.warmup_steps > 0 && step <= cfg.warmup_steps {
        cfg.peak_lr * step as f64 / cfg.warmup_steps as f64
    } else {
        cfg.peak_lr * (cfg.total_steps - step) as f64
            / (cfg.total_steps - cfg.warmup_steps) as f64
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StepLog {
    pub step: usize,
    pub loss: f64,
    pub lr: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub eval_ff1: Option<f64>,
}

/// Mutable training state; checkpointable and resumable.
#[derive(Debug, Clone)]
pub struct TrainState {
    pub params: ModelParams,
    pub m: ModelParams,
    pub v: ModelParams,
    /// Next step to run, 1-based.
    pub next_step: usize,
    pub best: Option<BestModel>,
}

#[derive(Debug, Clone)]
pub struct BestModel {
    pub params: ModelParams,
    pub step: usize,
    pub ff1: f64,
}

impl TrainState {
    pub fn new(params: ModelParams) -> Self {
        let m = params.zeros_like();
        let v = params.zeros_like();
        TrainState {
            params,
            m,
            v,
            next_step: 1,
            best: None,
        }
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut extra: Vec<(String, &Tensor)> = Vec::new();
        for (name, t) in self.m.named_tensors() {
            extra.push((format!("opt.m.{name}"), t));
        }
        for (name, t) in self.v.named_tensors() {
            extra.push((format!("opt.v.{name}"), t));
        }
        if let Some(best) = &self.best {
            for (name, t) in best.params.named_tensors() {
                extra.push((format!("best.{name}"), t));
            }
        }
        let meta = serde_json::json!({
            "train_state": {
                "next_step": self.next_step,
                "best_step": self.best.as_ref().map(|b| b.step),
                "best_ff1": self.best.as_ref().map(|b| b.ff1),
            }
        });
        // Borrow lifetimes: collect owned references before the call.
        let refs: Vec<(String, &Tensor)> = extra;
        save_checkpoint(path, &self.params, &meta, &refs)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let ckpt = load_checkpoint(&path)?;
        let state_meta = ckpt
            .meta
            .get("train_state")
            .cloned()
            .unwrap_or(serde_json::Value::Null);
        let next_step = state_meta
            .get("next_step")
            .and_then(|v| v.as_u64())
            .unwrap_or(1) as usize;
        let mut m = ckpt.params.zeros_like();
        let mut v = ckpt.params.zeros_like();
        let mut best_params = ckpt.params.zeros_like();
        let mut have_best = false;
        for (name, dst) in m.named_tensors_mut() {
            if let Some(t) = ckpt.extra.get(&format!("opt.m.{name}")) {
                *dst = t.clone();
            }
        }
        for (name, dst) in v.named_tensors_mut() {
            if let Some(t) = ckpt.extra.get(&format!("opt.v.{name}")) {
                *dst = t.clone();
            }
        }
        for (name, dst) in best_params.named_tensors_mut() {
            if let Some(t) = ckpt.extra.get(&format!("best.{name}")) {
                *dst = t.clone();
                have_best = true;
            }
        }
        let best = if have_best {
            Some(BestModel {
                params: best_params,
                step: state_meta.get("best_step").and_then(|v| v.as_u64()).unwrap_or(0) as usize,
                ff1: state_meta
                    .get("best_ff1")
                    .and_then(|v| v.as_f64())
                    .unwrap_or(0.0),
            })
        } else {
            None
        };
        Ok(TrainState {
            params: ckpt.params,
            m,
            v,
            next_step,
            best,
        })
    }
}

#[derive(Debug)]
pub struct TrainOutcome {
    /// Best-on-validation parameters, or the final parameters when no
    /// validation set was given.
    pub params: ModelParams,
    pub final_params: ModelParams,
    pub log: Vec<StepLog>,
    pub best_step: usize,
    pub best_ff1: Option<f64>,
}

/// The two objectives the loop can optimize.
enum Objective<'a> {
    Span(&'a [ModelInput]),
    MaskedUnits(&'a [Vec<u32>]),
}

impl Objective<'_> {
    fn len(&self) -> usize {
        match self {
            Objective::Span(x) => x.len(),
            Objective::MaskedUnits(x) => x.len(),
        }
    }
}

/// Trains on span examples, periodically scoring FF1 on the validation set
/// and tracking the best parameters.
pub fn train(
    train_set: &[ModelInput],
    val_set: &[PreparedExample],
    init: ModelParams,
    cfg: &TrainConfig,
    mut on_step: impl FnMut(&StepLog),
) -> Result<TrainOutcome> {
    let mut state = TrainState::new(init);
    let log = train_steps(
        &mut state,
        &Objective::Span(train_set),
        val_set,
        cfg,
        cfg.total_steps,
        &mut on_step,
    )?;
    Ok(outcome_from(state, log))
}

/// Resumes a checkpointed run to `cfg.total_steps`.
pub fn resume(
    train_set: &[ModelInput],
    val_set: &[PreparedExample],
    mut state: TrainState,
    cfg: &TrainConfig,
    mut on_step: impl FnMut(&StepLog),
) -> Result<TrainOutcome> {
    let log = train_steps(
        &mut state,
        &Objective::Span(train_set),
        val_set,
        cfg,
        cfg.total_steps,
        &mut on_step,
    )?;
    Ok(outcome_from(state, log))
}

/// Advances a run in place up to `run_until` (inclusive), leaving the state
/// resumable. Used for mid-training checkpoints.
pub fn train_partial(
    train_set: &[ModelInput],
    val_set: &[PreparedExample],
    state: &mut TrainState,
    cfg: &TrainConfig,
    run_until: usize,
    mut on_step: impl FnMut(&StepLog),
) -> Result<Vec<StepLog>> {
    train_steps(
        state,
        &Objective::Span(train_set),
        val_set,
        cfg,
        run_until,
        &mut on_step,
    )
}

/// Masked-unit pretraining over raw dense unit sequences (special tokens
/// and pseudo-query formatting are applied per step). Returns the final
/// parameters; validation is not used.
pub fn pretrain_mlm(
    sequences: &[Vec<u32>],
    init: ModelParams,
    cfg: &TrainConfig,
    mut on_step: impl FnMut(&StepLog),
) -> Result<TrainOutcome> {
    let mut state = TrainState::new(init);
    let log = train_steps(
        &mut state,
        &Objective::MaskedUnits(sequences),
        &[],
        cfg,
        cfg.total_steps,
        &mut on_step,
    )?;
    Ok(outcome_from(state, log))
}

fn outcome_from(state: TrainState, log: Vec<StepLog>) -> TrainOutcome {
    let final_params = state.params;
    match state.best {
        Some(best) => TrainOutcome {
            params: best.params,
            final_params,
            log,
            best_step: best.step,
            best_ff1: Some(best.ff1),
        },
        None => TrainOutcome {
            params: final_params.clone(),
            final_params,
            log,
            best_step: 0,
            best_ff1: None,
        },
    }
}

/// splitmix64; decorrelates derived seeds.
fn mix_seed(a: u64, b: u64, c: u64) -> u64 {
    let mut z = a
        .wrapping_mul(0x9e3779b97f4a7c15)
        .wrapping_add(b)
        .wrapping_mul(0xbf58476d1ce4e5b9)
        .wrapping_add(c);
    z ^= z >> 30;
    z = z.wrapping_mul(0xbf58476d1ce4e5b9);
    z ^= z >> 27;
    z = z.wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}

/// Batch member indices for a step: epoch-wise seeded shuffles, sliced in
/// order. Pure in (seed, step), so resume needs no RNG state.
fn batch_indices(step: usize, n: usize, batch: usize, seed: u64) -> Vec<usize> {
    let batch = batch.min(n);
    let steps_per_epoch = n.div_ceil(batch);
    let g = step - 1;
    let epoch = g / steps_per_epoch;
    let slot = g % steps_per_epoch;
    let mut perm: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(seed, epoch as u64, 0xbadc0ffee));
    for i in (1..n).rev() {
        let j = rng.gen_range(0..=i);
        perm.swap(i, j);
    }
    let lo = slot * batch;
    let hi = (lo + batch).min(n);
    perm[lo..hi].to_vec()
}

fn train_steps(
    state: &mut TrainState,
    objective: &Objective,
    val_set: &[PreparedExample],
    cfg: &TrainConfig,
    run_until: usize,
    on_step: &mut impl FnMut(&StepLog),
) -> Result<Vec<StepLog>> {
    cfg.validate()?;
    if objective.len() == 0 {
        return Err(Error::Config("training set is empty".into()));
    }
    let run_until = run_until.min(cfg.total_steps);
    let mut log = Vec::new();

    while state.next_step <= run_until {
        let t = state.next_step;
        let idxs = batch_indices(t, objective.len(), cfg.batch_size, cfg.seed);

        // Per-example gradients in parallel, reduced in example order.
        let results: Vec<Result<(f64, ModelParams)>> = idxs
            .par_iter()
            .map(|&i| {
                let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(cfg.seed, t as u64, i as u64));
                match objective {
                    Objective::Span(set) => backward_train(&state.params, &set[i], &mut rng),
                    Objective::MaskedUnits(seqs) => {
                        let k = state.params.cfg.unit_count();
                        let masked = build_pretrain_example(&seqs[i], k, &mut rng)?;
                        mlm_loss_and_grads(&state.params, &masked, Some(&mut rng))
                    }
                }
            })
            .collect();

        let mut grads = state.params.zeros_like();
        let mut loss_sum = 0.0;
        let inv_b = 1.0 / idxs.len() as f64;
        for r in results {
            let (loss, g) = r?;
            loss_sum += loss;
            grads.accumulate(&g, inv_b);
        }
        let loss = loss_sum * inv_b;
        if !loss.is_finite() {
            return Err(Error::Diverged { step: t, loss });
        }

        let g_norm = grads.global_norm();
        if cfg.grad_clip > 0.0 && g_norm > cfg.grad_clip {
            grads.scale(cfg.grad_clip / g_norm);
        }

        let lr = lr_at(t, cfg);
        adamw_step(&mut state.params, &mut state.m, &mut state.v, &grads, lr, cfg, t);
        if !state.params.all_finite() {
            return Err(Error::Diverged { step: t, loss });
        }

        let eval_ff1 = if !val_set.is_empty() && (t % cfg.eval_every == 0 || t == cfg.total_steps)
        {
            let score = validation_ff1(&state.params, val_set, cfg.max_answer_len)?;
            let better = state.best.as_ref().map(|b| score > b.ff1).unwrap_or(true);
            if better {
                state.best = Some(BestModel {
                    params: state.params.clone(),
                    step: t,
                    ff1: score,
                });
            }
            Some(score)
        } else {
            None
        };

        let entry = StepLog {
            step: t,
            loss,
            lr,
            eval_ff1,
        };
        on_step(&entry);
        log.push(entry);
        state.next_step = t + 1;
    }
    Ok(log)
}

fn adamw_step(
    params: &mut ModelParams,
    m: &mut ModelParams,
    v: &mut ModelParams,
    grads: &ModelParams,
    lr: f64,
    cfg: &TrainConfig,
    step: usize,
) {
    let bc1 = 1.0 - ADAM_BETA1.powi(step as i32);
    let bc2 = 1.0 - ADAM_BETA2.powi(step as i32);
    let p_tensors = params.named_tensors_mut();
    let m_tensors = m.named_tensors_mut();
    let v_tensors = v.named_tensors_mut();
    let g_tensors = grads.named_tensors();
    for ((((_, p), (_, mt)), (_, vt)), (_, g)) in p_tensors
        .into_iter()
        .zip(m_tensors)
        .zip(v_tensors)
        .zip(g_tensors)
    {
        let pd = p.data_mut();
        let md = mt.data_mut();
        let vd = vt.data_mut();
        let gd = g.data();
        for i in 0..pd.len() {
            md[i] = ADAM_BETA1 * md[i] + (1.0 - ADAM_BETA1) * gd[i];
            vd[i] = ADAM_BETA2 * vd[i] + (1.0 - ADAM_BETA2) * gd[i] * gd[i];
            let m_hat = md[i] / bc1;
            let v_hat = vd[i] / bc2;
            pd[i] -= lr * (m_hat / (v_hat.sqrt() + ADAM_EPS) + cfg.weight_decay * pd[i]);
            // Keep state f32-representable for lossless checkpoints.
            pd[i] = pd[i] as f32 as f64;
            md[i] = md[i] as f32 as f64;
            vd[i] = vd[i] as f32 as f64;
        }
    }
}

/// Macro FF1 of decoded spans against gold intervals.
pub fn validation_ff1(
    params: &ModelParams,
    val_set: &[PreparedExample],
    max_answer_len: usize,
) -> Result<f64> {
    if val_set.is_empty() {
        return Ok(0.0);
    }
    let scores: Vec<Result<f64>> = val_set
        .par_iter()
        .map(|ex| {
            let (start, end) = forward(params, &ex.input)?;
            let tok = decode_span(&start, &end, ex.input.passage_mask(), max_answer_len)?;
            let pred = ex.token_span_to_time(&tok)?;
            Ok(ff1(&pred, &ex.gold, ex.passage.frame_period()))
        })
        .collect();
    let mut sum = 0.0;
    for s in scores {
        sum += s?;
    }
    Ok(sum / val_set.len() as f64)
}
