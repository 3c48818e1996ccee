//! Pitch-constrained rendering of a score token sequence into a performance token sequence.

mod blocks;
mod sampling;
mod stub;
mod transformer;

pub use blocks::{blockwise_generate, blockwise_generate_traced, BlockConfig, BlockTrace};
pub use sampling::SamplingConfig;
pub use stub::{stub_predict, StubPerformer};
pub use transformer::TransformerPerformer;

use crate::tokenizer::{validate_body, Slot, TokenError, TokenId, TokenSeq, TOKENS_PER_NOTE, VOCAB_SIZE};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum InferenceError {
    #[error("ModelFailure: {0}")]
    ModelFailure(String),
    #[error("IllegalLogits: {0}")]
    IllegalLogits(String),
    #[error("InvalidConfig: {0}")]
    InvalidConfig(String),
    #[error("ScoreTooLong: {len} tokens exceed the window of {window}")]
    ScoreTooLong { len: usize, window: usize },
    #[error(transparent)]
    Token(#[from] TokenError),
}

/// Anything that scores the next performance token.
///
/// `prefix` always starts with BOS; the returned vector has one entry per vocabulary id.
pub trait PerformanceModel: Send + Sync {
    fn next_logits(&self, encoder: &[TokenId], prefix: &[TokenId]) -> Result<Vec<f64>, InferenceError>;
}

impl<M: PerformanceModel + ?Sized> PerformanceModel for &M {
    fn next_logits(&self, encoder: &[TokenId], prefix: &[TokenId]) -> Result<Vec<f64>, InferenceError> {
        (**self).next_logits(encoder, prefix)
    }
}

/// Window used when a caller does not say otherwise.
pub const DEFAULT_WINDOW: usize = 4096;

/// Renders one block: continues `prompt` (body tokens, no BOS) until it covers every frame of `encoder`.
pub(crate) fn continue_block(
    model: &dyn PerformanceModel,
    encoder: &[TokenId],
    prompt: &[TokenId],
    sampling: &SamplingConfig,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<TokenId>, InferenceError> {
    let mut prefix = Vec::with_capacity(encoder.len() + 1);
    prefix.push(crate::tokenizer::vocab::BOS);
    prefix.extend_from_slice(prompt);
    while prefix.len() - 1 < encoder.len() {
        let pos = prefix.len() - 1;
        let slot = Slot::of_position(pos);
        let token = if slot == Slot::Pitch {
            encoder[pos]
        } else {
            let logits = model.next_logits(encoder, &prefix)?;
            if logits.len() != VOCAB_SIZE {
                return Err(InferenceError::ModelFailure(format!(
                    "expected {VOCAB_SIZE} logits, got {}",
                    logits.len()
                )));
            }
            sampling.sample(&logits, slot.legal_range(), rng)?
        };
        prefix.push(token);
    }
    prefix.remove(0);
    Ok(prefix)
}

/// Generates a full performance for a score that fits in one window.
pub fn constrained_generate(
    model: &dyn PerformanceModel,
    score: &TokenSeq,
    sampling: &SamplingConfig,
) -> Result<TokenSeq, InferenceError> {
    constrained_generate_windowed(model, score, sampling, DEFAULT_WINDOW)
}

pub fn constrained_generate_windowed(
    model: &dyn PerformanceModel,
    score: &TokenSeq,
    sampling: &SamplingConfig,
    window: usize,
) -> Result<TokenSeq, InferenceError> {
    sampling.validate()?;
    let body = score_body(score)?;
    if body.len() > window {
        return Err(InferenceError::ScoreTooLong { len: body.len(), window });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(sampling.seed);
    continue_block(model, body, &[], sampling, &mut rng).map(TokenSeq::from)
}

/// Accepts both framed and bare score sequences.
pub(crate) fn score_body(score: &TokenSeq) -> Result<&[TokenId], InferenceError> {
    let body = score.body();
    validate_body(body)?;
    debug_assert_eq!(body.len() % TOKENS_PER_NOTE, 0);
    Ok(body)
}
