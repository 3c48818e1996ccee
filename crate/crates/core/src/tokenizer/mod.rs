//! Unified 8-token-per-note representation shared by scores and performances.
//!
//! Every note becomes `[Pitch, IOI, Velocity, Duration, Pedal1..Pedal4]`. Timing is
//! integer milliseconds; the four pedal tokens sample the sustain level across the
//! interval leading to the next note.

mod codec;
mod examples;
pub mod vocab;

#[cfg(test)]
pub(crate) use codec::tests as codec_tests;
pub use codec::{decode, encode, pedal_sample_points};
pub use examples::{build_sft_example, corrupt_for_pretraining, PretrainExample, SftExample, PRETRAIN_MASK_RATIO};
pub use vocab::{Slot, TokenId, TokenKind, TOKENS_PER_NOTE, VOCAB_SIZE};

use thiserror::Error;

use vocab::{BOS, EOS};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TokenError {
    #[error("EmptyPiece: piece has no notes")]
    EmptyPiece,
    #[error("BadLength: body of {0} tokens is not a whole number of 8-token frames")]
    BadLength(usize),
    #[error("SlotViolation: token {id} at position {position} is not a legal {expected} token")]
    SlotViolation { position: usize, expected: &'static str, id: TokenId },
    #[error("LengthMismatch: score has {score_notes} notes, performance has {perf_notes}")]
    LengthMismatch { score_notes: usize, perf_notes: usize },
    #[error("PitchMismatch: frame {0} has different score and performance pitches")]
    PitchMismatch(usize),
    #[error("InvalidRatio: masking ratio {0} outside (0, 1)")]
    InvalidRatio(f64),
}

/// Flat token sequence: a body of whole note frames, optionally framed by BOS/EOS.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash)]
pub struct TokenSeq(pub Vec<TokenId>);

impl TokenSeq {
    /// BOS + body + EOS.
    pub fn framed(body: &[TokenId]) -> TokenSeq {
        let mut ids = Vec::with_capacity(body.len() + 2);
        ids.push(BOS);
        ids.extend_from_slice(body);
        ids.push(EOS);
        TokenSeq(ids)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn ids(&self) -> &[TokenId] {
        &self.0
    }

    /// The sequence without a leading BOS and trailing EOS.
    pub fn body(&self) -> &[TokenId] {
        let mut s = self.0.as_slice();
        if let [BOS, rest @ ..] = s {
            s = rest;
        }
        if let [rest @ .., EOS] = s {
            s = rest;
        }
        s
    }

    pub fn note_count(&self) -> usize {
        self.body().len() / TOKENS_PER_NOTE
    }

    pub fn frames(&self) -> impl Iterator<Item = &[TokenId]> {
        self.body().chunks_exact(TOKENS_PER_NOTE)
    }

    /// Checks that the body is whole frames and each token is legal for its slot.
    pub fn validate(&self) -> Result<(), TokenError> {
        validate_body(self.body())
    }
}

impl From<Vec<TokenId>> for TokenSeq {
    fn from(ids: Vec<TokenId>) -> Self {
        TokenSeq(ids)
    }
}

pub fn validate_body(body: &[TokenId]) -> Result<(), TokenError> {
    if !body.len().is_multiple_of(TOKENS_PER_NOTE) {
        return Err(TokenError::BadLength(body.len()));
    }
    for (position, &id) in body.iter().enumerate() {
        let slot = Slot::of_position(position);
        if slot.value_of(id).is_none() {
            return Err(TokenError::SlotViolation { position, expected: slot.name(), id });
        }
    }
    Ok(())
}
