//! AdamW with cosine decay over a small set of examples.

use super::params::Params;
use super::{Model, ModelError};
use crate::tokenizer::{PretrainExample, SftExample, TokenId};
use crate::Scalar;

/// One teacher-forced sequence pair, already shifted: `decoder_input[t]` predicts `targets[t]`.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingExample {
    pub encoder_tokens: Vec<TokenId>,
    pub decoder_input: Vec<TokenId>,
    pub targets: Vec<TokenId>,
    pub loss_mask: Vec<bool>,
}

impl TrainingExample {
    fn shifted(encoder: &[TokenId], target: &[TokenId], mask: Vec<bool>) -> Self {
        let n = target.len();
        TrainingExample {
            encoder_tokens: encoder.to_vec(),
            decoder_input: target[..n - 1].to_vec(),
            targets: target[1..].to_vec(),
            loss_mask: mask[1..].to_vec(),
        }
    }

    /// Loss only where the encoder input was masked.
    pub fn from_pretrain(example: &PretrainExample) -> Self {
        Self::shifted(example.encoder_input.ids(), example.decoder_target.ids(), example.loss_mask.clone())
    }

    /// Loss over every performance body token.
    pub fn from_sft(example: &SftExample) -> Self {
        let n = example.decoder_target.len();
        let mask = (0..n).map(|i| i > 0 && i + 1 < n).collect();
        Self::shifted(example.encoder_input.ids(), example.decoder_target.ids(), mask)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerConfig {
    pub peak_lr: f64,
    pub warmup_steps: usize,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    pub batch_size: usize,
    /// Global-norm clipping threshold.
    pub grad_clip: Option<f64>,
}

impl OptimizerConfig {
    pub fn pretraining() -> Self {
        OptimizerConfig {
            peak_lr: 3e-4,
            warmup_steps: 2500,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.01,
            batch_size: 64,
            grad_clip: Some(1.0),
        }
    }

    pub fn fine_tuning() -> Self {
        OptimizerConfig { peak_lr: 5e-4, warmup_steps: 0, batch_size: 32, ..Self::pretraining() }
    }

    /// Settings that let the toy model memorize a handful of sequences quickly.
    pub fn toy() -> Self {
        OptimizerConfig { peak_lr: 3e-3, warmup_steps: 0, weight_decay: 0.0, batch_size: 1, ..Self::pretraining() }
    }
}

/// Linear warmup to the peak, then cosine decay towards zero at `total_steps`.
pub fn learning_rate(config: &OptimizerConfig, step: usize, total_steps: usize) -> f64 {
    let w = config.warmup_steps;
    if step < w {
        return config.peak_lr * (step + 1) as f64 / w as f64;
    }
    let span = total_steps.saturating_sub(w).max(1) as f64;
    let progress = ((step - w) as f64 / span).min(1.0);
    config.peak_lr * 0.5 * (1.0 + (std::f64::consts::PI * progress).cos())
}

struct AdamState<T> {
    m: Params<T>,
    v: Params<T>,
}

/// Runs `steps` optimizer updates, cycling through `examples` in order, and returns the mean batch
/// loss seen at each step before its update.
pub fn train_steps<T: Scalar>(
    model: &mut Model<T>,
    examples: &[TrainingExample],
    config: &OptimizerConfig,
    steps: usize,
) -> Result<Vec<f64>, ModelError> {
    if examples.is_empty() {
        return Err(ModelError::BadShape("no training examples".into()));
    }
    let batch = config.batch_size.max(1);
    let mut state = AdamState { m: model.params.zeros_like(), v: model.params.zeros_like() };
    let mut trace = Vec::with_capacity(steps);
    for step in 0..steps {
        let mut grads = model.params.zeros_like();
        let mut total = 0.0;
        for i in 0..batch {
            let example = &examples[(step * batch + i) % examples.len()];
            let (report, g) = model.backward(example, T::of(1.0 / batch as f64))?;
            total += report.loss;
            grads.add_assign(&g);
        }
        trace.push(total / batch as f64);
        if let Some(limit) = config.grad_clip {
            let norm = grads.global_norm();
            if norm > limit {
                grads.scale(T::of(limit / norm));
            }
        }
        let lr = learning_rate(config, step, steps);
        adam_update(&mut model.params, &grads, &mut state, config, lr, step + 1);
    }
    Ok(trace)
}

fn adam_update<T: Scalar>(
    params: &mut Params<T>,
    grads: &Params<T>,
    state: &mut AdamState<T>,
    config: &OptimizerConfig,
    lr: f64,
    t: usize,
) {
    let (b1, b2) = (T::of(config.beta1), T::of(config.beta2));
    let c1 = T::of(1.0 - config.beta1.powi(t as i32));
    let c2 = T::of(1.0 - config.beta2.powi(t as i32));
    let (lr_t, decay, eps) = (T::of(lr), T::of(lr * config.weight_decay), T::of(config.eps));
    let g_all = grads.tensors();
    let params_all = params.tensors_mut();
    let m_all = state.m.tensors_mut();
    let v_all = state.v.tensors_mut();
    for (((p, (_, g)), m), v) in params_all.into_iter().zip(g_all).zip(m_all).zip(v_all) {
        for (((p, &g), m), v) in p.data_mut().iter_mut().zip(g.data()).zip(m.data_mut()).zip(v.data_mut()) {
            *m = b1 * *m + (T::one() - b1) * g;
            *v = b2 * *v + (T::one() - b2) * g * g;
            let step = (*m / c1) / ((*v / c2).sqrt() + eps);
            *p -= lr_t * step + decay * *p;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cosine_schedule_endpoints() {
        let c = OptimizerConfig::fine_tuning();
        assert_eq!(learning_rate(&c, 0, 1000), c.peak_lr);
        assert!(learning_rate(&c, 999, 1000) < 1e-5 * c.peak_lr);
        assert!((learning_rate(&c, 500, 1000) - 0.5 * c.peak_lr).abs() < 1e-15);
    }

    #[test]
    fn warmup_ramps_linearly() {
        let c = OptimizerConfig::pretraining();
        assert!((learning_rate(&c, 1249, 40_000) - 0.5 * c.peak_lr).abs() < 1e-15);
        assert_eq!(learning_rate(&c, 2499, 40_000), c.peak_lr);
        assert_eq!(learning_rate(&c, 2500, 40_000), c.peak_lr);
    }

    #[test]
    fn schedule_is_monotone_after_warmup() {
        let c = OptimizerConfig::pretraining();
        let rates: Vec<f64> = (2500..40_000).step_by(97).map(|s| learning_rate(&c, s, 40_000)).collect();
        assert!(rates.windows(2).all(|w| w[1] <= w[0]));
    }
}
