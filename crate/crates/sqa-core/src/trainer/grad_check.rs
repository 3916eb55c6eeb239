//! Central-difference verification of the analytic gradients.

use crate::error::Result;
use crate::model::{backward, span_loss, ModelInput, ModelParams};

/// Compares analytic gradients against central differences on a coordinate
/// sample spanning every parameter tensor (at least one per tensor, about
/// `budget` overall). Returns the maximum relative error.
pub fn grad_check(params: &ModelParams, example: &ModelInput, epsilon: f64) -> Result<f64> {
    grad_check_filtered(params, example, epsilon, 1000, |_| true)
}

/// As [`grad_check`], restricted to tensors accepted by `keep`.
pub fn grad_check_filtered(
    params: &ModelParams,
    example: &ModelInput,
    epsilon: f64,
    budget: usize,
    keep: impl Fn(&str) -> bool,
) -> Result<f64> {
    let (_, analytic) = backward(params, example)?;
    let target = example.target().expect("backward demands a target");

    let named: Vec<(String, usize)> = params
        .named_tensors()
        .into_iter()
        .filter(|(n, _)| keep(n))
        .map(|(n, t)| (n, t.len()))
        .collect();
    let total: usize = named.iter().map(|(_, l)| l).sum();
    let mut max_rel: f64 = 0.0;

    for (name, len) in &named {
        // Proportional share of the budget, at least one coordinate.
        let probes = ((budget * len).div_ceil(total)).clamp(1, *len);
        for j in 0..probes {
            let idx = j * len / probes;
            let loss_at = |delta: f64| -> Result<f64> {
                let mut p = params.clone();
                for (n, t) in p.named_tensors_mut() {
                    if &n == name {
                        t.data_mut()[idx] += delta;
                    }
                }
                let cache = crate::model::forward(&p, example)?;
                span_loss(&cache.0, &cache.1, &target, example.passage_mask())
            };
            let fd = (loss_at(epsilon)? - loss_at(-epsilon)?) / (2.0 * epsilon);
            let an = analytic
                .named_tensors()
                .into_iter()
                .find(|(n, _)| n == name)
                .map(|(_, t)| t.data()[idx])
                .expect("tensor exists");
            let rel = (an - fd).abs() / an.abs().max(fd.abs()).max(1e-6);
            if rel > max_rel {
                max_rel = rel;
            }
        }
    }
    Ok(max_rel)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ModelConfig;
    use crate::units::IndexSpan;

    fn check_setup() -> (ModelParams, ModelInput) {
        let cfg = ModelConfig {
            vocab_size: 8 + 4,
            max_len: 32,
            layers: 2,
            model_dim: 16,
            heads: 2,
            ffn_dim: 32,
            local_window: 3,
            dropout: 0.0,
        };
        let params = ModelParams::init(&cfg, 19);
        let tokens: Vec<u32> = vec![8, 1, 2, 9, 3, 4, 5, 6, 7, 0, 1, 10];
        let n = tokens.len();
        let mut global = vec![false; n];
        global[0] = true;
        global[1] = true;
        global[2] = true;
        let mut pmask = vec![false; n];
        for m in pmask.iter_mut().take(n - 1).skip(4) {
            *m = true;
        }
        let input = ModelInput::new(
            tokens,
            pmask,
            global,
            Some(IndexSpan { start: 5, end: 8 }),
        )
        .unwrap();
        (params, input)
    }

    #[test]
    fn two_layer_dim16_model_passes_at_1e4() {
        let (params, input) = check_setup();
        let err = grad_check(&params, &input, 1e-5).unwrap();
        assert!(err < 1e-4, "max relative error {err}");
    }

    #[test]
    fn span_head_alone_is_near_machine_precision() {
        let (params, input) = check_setup();
        let err = grad_check_filtered(&params, &input, 1e-5, 200, |n| n.starts_with("span_"))
            .unwrap();
        assert!(err < 1e-6, "span head error {err}");
    }

    #[test]
    fn epsilon_sweep_dips_then_rises() {
        let (params, input) = check_setup();
        // Truncation error dominates at large epsilon, cancellation at tiny
        // epsilon; the middle is the sweet spot.
        let coarse = grad_check_filtered(&params, &input, 1e-2, 60, |_| true).unwrap();
        let mid = grad_check_filtered(&params, &input, 1e-5, 60, |_| true).unwrap();
        let fine = grad_check_filtered(&params, &input, 1e-10, 60, |_| true).unwrap();
        assert!(mid <= coarse, "mid {mid} vs coarse {coarse}");
        assert!(mid <= fine, "mid {mid} vs fine {fine}");
        assert!(fine > mid || coarse > mid, "curve must bend: {coarse} {mid} {fine}");
    }
}
