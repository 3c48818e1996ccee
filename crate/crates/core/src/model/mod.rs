//! Note-compressing encoder-decoder transformer.
//!
//! The encoder sees one vector per note: the eight token embeddings of a frame are each
//! projected by a slot matrix and summed. The decoder works token by token with causal
//! self-attention and cross-attention into that note memory.

mod checkpoint;
mod cost;
mod layers;
mod loss;
mod network;
mod params;
mod tensor;
mod train;

pub use checkpoint::{load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint, CheckpointError};
pub use cost::{attention_cost, count_parameters, decoder_step_cost, DecoderStepCost, ParameterBreakdown};
pub use loss::{loss, LossReport};
pub use network::{aggregate_notes, IncrementalDecoder};
pub use params::{AttentionParams, DecoderLayerParams, EncoderLayerParams, FeedForwardParams, Params};
pub use tensor::Matrix;
pub use train::{learning_rate, train_steps, OptimizerConfig, TrainingExample};

use crate::tokenizer::{TokenId, TOKENS_PER_NOTE, VOCAB_SIZE};
use crate::Scalar;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("InvalidConfig: {0}")]
    InvalidConfig(String),
    #[error("BadShape: {0}")]
    BadShape(String),
    #[error("EmptyMask: no position selected for the loss")]
    EmptyMask,
    #[error("BadToken: id {0} is outside the vocabulary")]
    BadToken(TokenId),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ModelConfig {
    pub hidden_size: usize,
    pub ffn_size: usize,
    pub encoder_layers: usize,
    pub decoder_layers: usize,
    pub head_dim: usize,
    pub vocab_size: usize,
    /// Longest encoder input in tokens.
    pub max_seq_len: usize,
    pub compression_factor: usize,
    pub seed: u64,
}

impl ModelConfig {
    pub fn toy() -> Self {
        ModelConfig {
            hidden_size: 32,
            ffn_size: 64,
            encoder_layers: 2,
            decoder_layers: 1,
            head_dim: 8,
            vocab_size: VOCAB_SIZE,
            max_seq_len: 4096,
            compression_factor: TOKENS_PER_NOTE,
            seed: 0,
        }
    }

    /// The published 135M configuration.
    pub fn base() -> Self {
        ModelConfig {
            hidden_size: 768,
            ffn_size: 3072,
            encoder_layers: 10,
            decoder_layers: 2,
            head_dim: 128,
            ..Self::toy()
        }
    }

    pub fn heads(&self) -> usize {
        self.hidden_size / self.head_dim
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |m: String| Err(ModelError::InvalidConfig(m));
        if self.hidden_size == 0 || self.head_dim == 0 || self.ffn_size == 0 {
            return bad("sizes must be positive".into());
        }
        if !self.hidden_size.is_multiple_of(self.head_dim) {
            return bad(format!("hidden size {} not divisible by head dim {}", self.hidden_size, self.head_dim));
        }
        if !self.head_dim.is_multiple_of(2) {
            return bad(format!("head dim {} must be even for rotary positions", self.head_dim));
        }
        if self.compression_factor != TOKENS_PER_NOTE {
            return bad(format!("compression factor must be {TOKENS_PER_NOTE}, got {}", self.compression_factor));
        }
        if self.vocab_size != VOCAB_SIZE {
            return bad(format!("vocab size must be {VOCAB_SIZE}, got {}", self.vocab_size));
        }
        if self.max_seq_len == 0 || !self.max_seq_len.is_multiple_of(TOKENS_PER_NOTE) {
            return bad(format!(
                "max sequence length {} must be a positive multiple of {TOKENS_PER_NOTE}",
                self.max_seq_len
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Model<T> {
    pub config: ModelConfig,
    pub params: Params<T>,
}

impl<T: Scalar> Model<T> {
    pub fn init(config: ModelConfig, seed: u64) -> Result<Self, ModelError> {
        config.validate()?;
        let params = Params::init(&config, seed);
        Ok(Model { config, params })
    }

    pub fn from_params(config: ModelConfig, params: Params<T>) -> Result<Self, ModelError> {
        config.validate()?;
        let expected = cost::tensor_shapes(&config);
        let actual: Vec<_> = params.tensors().into_iter().map(|(name, m)| (name, (m.rows(), m.cols()))).collect();
        if expected != actual {
            return Err(ModelError::BadShape("parameter shapes do not match the config".into()));
        }
        Ok(Model { config, params })
    }

    pub fn parameter_count(&self) -> usize {
        self.params.parameter_count()
    }

    /// Next-token logits for every decoder position, `decoder.len() × vocab`.
    pub fn forward(&self, encoder: &[TokenId], decoder: &[TokenId]) -> Result<Matrix<T>, ModelError> {
        Ok(network::forward(self, encoder, decoder)?.0)
    }

    /// Normalized note memory, one row per encoder frame.
    pub fn encode_memory(&self, encoder: &[TokenId]) -> Result<Matrix<T>, ModelError> {
        network::encode(self, encoder).map(|(m, _)| m)
    }

    /// Logits for the token after `prefix`, given precomputed memory.
    pub fn next_token_logits(&self, memory: &Matrix<T>, prefix: &[TokenId]) -> Result<Vec<T>, ModelError> {
        let (logits, _) = network::decode(self, memory, prefix)?;
        Ok(logits.row(logits.rows() - 1).to_vec())
    }

    /// Loss and gradients for one example; gradients are of `scale × loss`.
    pub fn backward(&self, example: &TrainingExample, scale: T) -> Result<(LossReport, Params<T>), ModelError> {
        let (logits, cache) = network::forward(self, &example.encoder_tokens, &example.decoder_input)?;
        let (report, dlogits) = loss::loss_with_grad(&logits, &example.targets, &example.loss_mask, scale)?;
        let grads = network::backward(self, &cache, &dlogits);
        Ok((report, grads))
    }

    pub fn evaluate(&self, example: &TrainingExample) -> Result<LossReport, ModelError> {
        let logits = self.forward(&example.encoder_tokens, &example.decoder_input)?;
        loss(&logits, &example.targets, &example.loss_mask)
    }

    pub fn cast<U: Scalar>(&self) -> Model<U> {
        Model { config: self.config.clone(), params: self.params.cast() }
    }
}

#[cfg(test)]
mod tests;
