use super::{InferenceError, PerformanceModel};
use crate::tokenizer::{Slot, TokenId, TokenSeq, TOKENS_PER_NOTE, VOCAB_SIZE};

/// Velocity every stub note is played at.
pub const STUB_VELOCITY: u16 = 64;

/// Mechanical rendition of one score frame: score timing, flat velocity, no pedal.
pub fn stub_predict(frame: &[TokenId]) -> [TokenId; TOKENS_PER_NOTE] {
    let mut out = [0; TOKENS_PER_NOTE];
    for (i, slot) in Slot::ALL.iter().enumerate() {
        out[i] = match slot {
            Slot::Pitch | Slot::Ioi | Slot::Duration => frame[i],
            Slot::Velocity => slot.token(STUB_VELOCITY),
            Slot::Pedal(_) => slot.token(0),
        };
    }
    out
}

/// Context-free performer that emits [`stub_predict`] as one-hot logits.
#[derive(Debug, Clone, Copy, Default)]
pub struct StubPerformer;

impl StubPerformer {
    /// The whole performance in closed form, frame by frame.
    pub fn render(score: &[TokenId]) -> TokenSeq {
        TokenSeq::from(score.chunks_exact(TOKENS_PER_NOTE).flat_map(stub_predict).collect::<Vec<_>>())
    }
}

impl PerformanceModel for StubPerformer {
    fn next_logits(&self, encoder: &[TokenId], prefix: &[TokenId]) -> Result<Vec<f64>, InferenceError> {
        let pos = prefix.len().checked_sub(1).ok_or_else(|| InferenceError::ModelFailure("empty prefix".into()))?;
        let frame = pos / TOKENS_PER_NOTE;
        let start = frame * TOKENS_PER_NOTE;
        let Some(score_frame) = encoder.get(start..start + TOKENS_PER_NOTE) else {
            return Err(InferenceError::ModelFailure(format!("position {pos} is past the end of the score")));
        };
        let target = stub_predict(score_frame)[pos % TOKENS_PER_NOTE];
        let mut logits = vec![-1e30; VOCAB_SIZE];
        logits[target as usize] = 0.0;
        Ok(logits)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn frame_rule() {
        let score = [
            Slot::Pitch.token(60),
            Slot::Ioi.token(500),
            Slot::Velocity.token(99),
            Slot::Duration.token(250),
            5261,
            5300,
            5388,
            5261,
        ];
        let expected = [
            Slot::Pitch.token(60),
            Slot::Ioi.token(500),
            Slot::Velocity.token(64),
            Slot::Duration.token(250),
            Slot::Pedal(0).token(0),
            Slot::Pedal(1).token(0),
            Slot::Pedal(2).token(0),
            Slot::Pedal(3).token(0),
        ];
        assert_eq!(stub_predict(&score), expected);
    }

    #[test]
    fn past_the_end_is_a_model_failure() {
        let score = stub_predict(&[65, 261, 133, 262, 5261, 5261, 5261, 5261]);
        let prefix = vec![2; 9];
        assert!(matches!(StubPerformer.next_logits(&score, &prefix), Err(InferenceError::ModelFailure(_))));
    }
}
