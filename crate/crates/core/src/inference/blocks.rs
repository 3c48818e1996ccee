//! Overlapped windows for scores longer than the model's context.

use super::{continue_block, score_body, InferenceError, PerformanceModel, SamplingConfig, DEFAULT_WINDOW};
use crate::tokenizer::{TokenSeq, TOKENS_PER_NOTE};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BlockConfig {
    /// Encoder tokens per block.
    pub window: usize,
    /// Tokens the window advances between blocks.
    pub stride: usize,
    /// Whole notes discarded from the end of the reused overlap.
    pub tail_drop_notes: usize,
}

impl Default for BlockConfig {
    fn default() -> Self {
        BlockConfig { window: DEFAULT_WINDOW, stride: 2048, tail_drop_notes: 2 }
    }
}

impl BlockConfig {
    pub fn validate(&self) -> Result<(), InferenceError> {
        let bad = |m: String| Err(InferenceError::InvalidConfig(m));
        if self.window == 0
            || !self.window.is_multiple_of(TOKENS_PER_NOTE)
            || !self.stride.is_multiple_of(TOKENS_PER_NOTE)
        {
            return bad(format!(
                "window {} and stride {} must be positive multiples of {TOKENS_PER_NOTE}",
                self.window, self.stride
            ));
        }
        if self.stride == 0 || self.stride >= self.window {
            return bad(format!("stride {} must lie in (0, window)", self.stride));
        }
        if self.tail_drop_notes * TOKENS_PER_NOTE >= self.window - self.stride {
            return bad(format!("dropping {} notes leaves no overlap to reuse", self.tail_drop_notes));
        }
        Ok(())
    }
}

/// What one block saw and produced.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BlockTrace {
    pub encoder_start: usize,
    pub encoder_len: usize,
    /// Previously generated tokens given to the decoder as context.
    pub prompt_len: usize,
    /// Tokens appended to the output by this block.
    pub new_tokens: usize,
}

pub fn blockwise_generate(
    model: &dyn PerformanceModel,
    score: &TokenSeq,
    block: &BlockConfig,
    sampling: &SamplingConfig,
) -> Result<TokenSeq, InferenceError> {
    blockwise_generate_traced(model, score, block, sampling).map(|(seq, _)| seq)
}

pub fn blockwise_generate_traced(
    model: &dyn PerformanceModel,
    score: &TokenSeq,
    block: &BlockConfig,
    sampling: &SamplingConfig,
) -> Result<(TokenSeq, Vec<BlockTrace>), InferenceError> {
    block.validate()?;
    sampling.validate()?;
    let body = score_body(score)?;
    let mut rng = ChaCha8Rng::seed_from_u64(sampling.seed);
    let mut out = Vec::with_capacity(body.len());
    let mut trace = Vec::new();
    let mut start = 0;
    loop {
        let end = (start + block.window).min(body.len());
        let keep = if start == 0 { 0 } else { out.len() - start - block.tail_drop_notes * TOKENS_PER_NOTE };
        out.truncate(start + keep);
        let generated = continue_block(model, &body[start..end], &out[start..], sampling, &mut rng)?;
        trace.push(BlockTrace {
            encoder_start: start,
            encoder_len: end - start,
            prompt_len: keep,
            new_tokens: generated.len() - keep,
        });
        out.extend_from_slice(&generated[keep..]);
        if end == body.len() {
            break;
        }
        start += block.stride;
    }
    Ok((TokenSeq::from(out), trace))
}
