use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::vocab::{MASK, TOKENS_PER_NOTE};
use super::{validate_body, TokenError, TokenSeq};

/// Masked-denoising pair: corrupted encoder input, clean BOS-framed target.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PretrainExample {
    pub encoder_input: TokenSeq,
    pub decoder_target: TokenSeq,
    /// One flag per `decoder_target` position; true where the source token was masked.
    pub loss_mask: Vec<bool>,
}

impl PretrainExample {
    /// Positions of the encoder input that were replaced by MASK, ascending.
    pub fn masked_positions(&self) -> Vec<usize> {
        self.loss_mask.iter().enumerate().filter(|(_, &m)| m).map(|(i, _)| i - 1).collect()
    }
}

/// Aligned score to performance pair for supervised fine-tuning.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SftExample {
    pub encoder_input: TokenSeq,
    pub decoder_target: TokenSeq,
}

/// Fraction of tokens masked during pre-training.
pub const PRETRAIN_MASK_RATIO: f64 = 0.3;

/// Replaces `floor(ratio * len)` distinct, uniformly chosen positions with MASK.
pub fn corrupt_for_pretraining(seq: &TokenSeq, ratio: f64, seed: u64) -> Result<PretrainExample, TokenError> {
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(TokenError::InvalidRatio(ratio));
    }
    let body = seq.body();
    if body.is_empty() {
        return Err(TokenError::EmptyPiece);
    }
    let count = (ratio * body.len() as f64).floor() as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut positions = rand::seq::index::sample(&mut rng, body.len(), count).into_vec();
    positions.sort_unstable();

    let mut corrupted = body.to_vec();
    let mut loss_mask = vec![false; body.len() + 2];
    for &p in &positions {
        corrupted[p] = MASK;
        loss_mask[p + 1] = true;
    }
    Ok(PretrainExample { encoder_input: TokenSeq(corrupted), decoder_target: TokenSeq::framed(body), loss_mask })
}

/// Pairs a score with its note-aligned performance; pitches must agree frame by frame.
pub fn build_sft_example(score: &TokenSeq, perf: &TokenSeq) -> Result<SftExample, TokenError> {
    let (score, perf) = (score.body(), perf.body());
    validate_body(score)?;
    validate_body(perf)?;
    let (score_notes, perf_notes) = (score.len() / TOKENS_PER_NOTE, perf.len() / TOKENS_PER_NOTE);
    if score_notes != perf_notes {
        return Err(TokenError::LengthMismatch { score_notes, perf_notes });
    }
    if let Some(frame) =
        score.chunks_exact(TOKENS_PER_NOTE).zip(perf.chunks_exact(TOKENS_PER_NOTE)).position(|(s, p)| s[0] != p[0])
    {
        return Err(TokenError::PitchMismatch(frame));
    }
    Ok(SftExample { encoder_input: TokenSeq(score.to_vec()), decoder_target: TokenSeq::framed(perf) })
}
