use super::{InferenceError, PerformanceModel};
use crate::model::{IncrementalDecoder, Matrix, Model};
use crate::tokenizer::TokenId;
use crate::Scalar;
use std::sync::Mutex;

struct Session<T> {
    encoder: Vec<TokenId>,
    memory: Matrix<T>,
    decoder: IncrementalDecoder<T>,
}

/// Adapts the transformer to [`PerformanceModel`].
///
/// Memory and decoder keys are reused while calls keep extending the same prefix, so a whole
/// block costs one encoder pass and one decoder step per token.
pub struct TransformerPerformer<T> {
    model: Model<T>,
    session: Mutex<Option<Session<T>>>,
}

impl<T: Scalar> TransformerPerformer<T> {
    pub fn new(model: Model<T>) -> Self {
        TransformerPerformer { model, session: Mutex::new(None) }
    }

    pub fn model(&self) -> &Model<T> {
        &self.model
    }
}

fn failure(e: impl std::fmt::Display) -> InferenceError {
    InferenceError::ModelFailure(e.to_string())
}

impl<T: Scalar> PerformanceModel for TransformerPerformer<T> {
    fn next_logits(&self, encoder: &[TokenId], prefix: &[TokenId]) -> Result<Vec<f64>, InferenceError> {
        if prefix.is_empty() {
            return Err(failure("empty prefix"));
        }
        let mut guard = self.session.lock().map_err(failure)?;
        let reusable = guard.as_ref().is_some_and(|s| {
            s.encoder == encoder && s.decoder.tokens().len() < prefix.len() && prefix.starts_with(s.decoder.tokens())
        });
        if !reusable {
            let memory = match guard.take() {
                Some(s) if s.encoder == encoder => s.memory,
                _ => self.model.encode_memory(encoder).map_err(failure)?,
            };
            let decoder = IncrementalDecoder::new(&self.model, &memory).map_err(failure)?;
            *guard = Some(Session { encoder: encoder.to_vec(), memory, decoder });
        }
        let session = guard.as_mut().expect("session initialized above");
        let mut logits = Vec::new();
        for &t in &prefix[session.decoder.tokens().len()..] {
            logits = session.decoder.push(&self.model, t).map_err(failure)?;
        }
        Ok(logits.into_iter().map(Scalar::as_f64).collect())
    }
}
