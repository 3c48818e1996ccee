use super::InferenceError;
use crate::tokenizer::TokenId;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use std::ops::RangeInclusive;

#[derive(Debug, Clone, PartialEq)]
pub struct SamplingConfig {
    pub temperature: f64,
    pub top_k: usize,
    pub seed: u64,
}

impl Default for SamplingConfig {
    fn default() -> Self {
        SamplingConfig { temperature: 1.0, top_k: 32, seed: 0 }
    }
}

impl SamplingConfig {
    /// Always the highest-scoring legal id; the zero-temperature limit.
    pub fn greedy() -> Self {
        SamplingConfig { top_k: 1, ..Self::default() }
    }

    pub fn validate(&self) -> Result<(), InferenceError> {
        if !(self.temperature.is_finite() && self.temperature > 0.0) {
            return Err(InferenceError::InvalidConfig(format!(
                "temperature {} must be finite and positive",
                self.temperature
            )));
        }
        if self.top_k == 0 || self.top_k > crate::tokenizer::VOCAB_SIZE {
            return Err(InferenceError::InvalidConfig(format!("top_k {} out of range", self.top_k)));
        }
        Ok(())
    }

    /// Draws an id from `range` only, using temperature-scaled, top-k filtered logits.
    pub(crate) fn sample(
        &self,
        logits: &[f64],
        range: RangeInclusive<TokenId>,
        rng: &mut ChaCha8Rng,
    ) -> Result<TokenId, InferenceError> {
        let (lo, hi) = (*range.start() as usize, *range.end() as usize);
        let legal = &logits[lo..=hi];
        if let Some(i) = legal.iter().position(|v| v.is_nan() || *v == f64::INFINITY) {
            return Err(InferenceError::IllegalLogits(format!("id {} has logit {}", lo + i, legal[i])));
        }
        let mut order: Vec<usize> = (0..legal.len()).filter(|&i| legal[i] > f64::NEG_INFINITY).collect();
        if order.is_empty() {
            return Err(InferenceError::IllegalLogits(format!("no finite logit in ids {lo}..={hi}")));
        }
        // Stable sort keeps the lower id first among ties.
        order.sort_by(|&a, &b| legal[b].total_cmp(&legal[a]));
        order.truncate(self.top_k);
        if order.len() == 1 {
            return Ok((lo + order[0]) as TokenId);
        }
        let top = legal[order[0]];
        let weights: Vec<f64> = order.iter().map(|&i| ((legal[i] - top) / self.temperature).exp()).collect();
        let total: f64 = weights.iter().sum();
        let mut u = rng.random_range(0.0..total);
        for (&i, &w) in order.iter().zip(&weights) {
            if u < w {
                return Ok((lo + i) as TokenId);
            }
            u -= w;
        }
        Ok((lo + *order.last().expect("non-empty")) as TokenId)
    }
}
