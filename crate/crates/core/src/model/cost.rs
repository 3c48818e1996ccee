//! Closed-form parameter counts and multiply-accumulate accounting.

use super::{ModelConfig, ModelError};
use crate::tokenizer::TOKENS_PER_NOTE;

/// Parameter totals per component.
///
/// With `V` vocab, `d` width, `f` feed-forward width, `E`/`D` encoder/decoder depth:
/// embedding `Vd`, aggregation `8d²`, encoder `E(4d² + 3df + 2d) + d`,
/// decoder `D(8d² + 3df + 3d) + d`, output `Vd`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ParameterBreakdown {
    pub embedding: u64,
    pub aggregation: u64,
    pub encoder_attention: u64,
    pub encoder_feed_forward: u64,
    pub decoder_attention: u64,
    pub decoder_feed_forward: u64,
    pub normalization: u64,
    pub output: u64,
}

impl ParameterBreakdown {
    pub fn total(&self) -> u64 {
        self.embedding
            + self.aggregation
            + self.encoder_attention
            + self.encoder_feed_forward
            + self.decoder_attention
            + self.decoder_feed_forward
            + self.normalization
            + self.output
    }
}

pub fn count_parameters(config: &ModelConfig) -> ParameterBreakdown {
    let (v, d, f) = (config.vocab_size as u64, config.hidden_size as u64, config.ffn_size as u64);
    let (e, dl) = (config.encoder_layers as u64, config.decoder_layers as u64);
    ParameterBreakdown {
        embedding: v * d,
        aggregation: TOKENS_PER_NOTE as u64 * d * d,
        encoder_attention: e * 4 * d * d,
        encoder_feed_forward: e * 3 * d * f,
        decoder_attention: dl * 8 * d * d,
        decoder_feed_forward: dl * 3 * d * f,
        normalization: (2 * e + 3 * dl + 2) * d,
        output: v * d,
    }
}

/// Names and shapes of every tensor, in checkpoint order.
pub(crate) fn tensor_shapes(config: &ModelConfig) -> Vec<(String, (usize, usize))> {
    let (v, d, f) = (config.vocab_size, config.hidden_size, config.ffn_size);
    let mut out = vec![("embedding".to_string(), (v, d))];
    for s in 0..TOKENS_PER_NOTE {
        out.push((format!("aggregation.slot{s}"), (d, d)));
    }
    let attn = |out: &mut Vec<_>, p: &str| {
        for w in ["wq", "wk", "wv", "wo"] {
            out.push((format!("{p}.{w}"), (d, d)));
        }
    };
    let ffn = |out: &mut Vec<_>, p: &str| {
        out.push((format!("{p}.gate"), (f, d)));
        out.push((format!("{p}.up"), (f, d)));
        out.push((format!("{p}.down"), (d, f)));
    };
    for l in 0..config.encoder_layers {
        out.push((format!("encoder.{l}.attn_norm"), (1, d)));
        attn(&mut out, &format!("encoder.{l}.attn"));
        out.push((format!("encoder.{l}.ffn_norm"), (1, d)));
        ffn(&mut out, &format!("encoder.{l}.ffn"));
    }
    out.push(("encoder_norm".to_string(), (1, d)));
    for l in 0..config.decoder_layers {
        out.push((format!("decoder.{l}.self_norm"), (1, d)));
        attn(&mut out, &format!("decoder.{l}.self_attn"));
        out.push((format!("decoder.{l}.cross_norm"), (1, d)));
        attn(&mut out, &format!("decoder.{l}.cross_attn"));
        out.push((format!("decoder.{l}.ffn_norm"), (1, d)));
        ffn(&mut out, &format!("decoder.{l}.ffn"));
    }
    out.push(("decoder_norm".to_string(), (1, d)));
    out.push(("output".to_string(), (v, d)));
    out
}

/// Self-attention multiply-accumulates for `layers` layers over `seq_len` tokens.
///
/// Each head pays `L² · head_dim` for the scores and the same again for weighting the values,
/// where `L` is the token count, or the note count when the encoder compresses.
pub fn attention_cost(
    config: &ModelConfig,
    seq_len: usize,
    layers: usize,
    compressed: bool,
) -> Result<u128, ModelError> {
    let len = if compressed {
        if !seq_len.is_multiple_of(TOKENS_PER_NOTE) {
            return Err(ModelError::BadShape(format!("{seq_len} tokens do not form whole notes")));
        }
        seq_len / TOKENS_PER_NOTE
    } else {
        seq_len
    };
    let l = len as u128;
    Ok(layers as u128 * config.heads() as u128 * l * l * config.head_dim as u128 * 2)
}

/// Multiply-accumulates for producing one decoder token.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DecoderStepCost {
    /// All decoder blocks together.
    pub blocks: u128,
    /// Final projection onto the vocabulary.
    pub output_head: u128,
}

impl DecoderStepCost {
    pub fn total(&self) -> u128 {
        self.blocks + self.output_head
    }
}

/// One token step attending to `context` earlier tokens and `memory` note vectors.
pub fn decoder_step_cost(config: &ModelConfig, layers: usize, context: usize, memory: usize) -> DecoderStepCost {
    let (d, f) = (config.hidden_size as u128, config.ffn_size as u128);
    let projections = 8 * d * d;
    let attention = 2 * d * (context as u128 + memory as u128);
    let ffn = 3 * d * f;
    DecoderStepCost {
        blocks: layers as u128 * (projections + attention + ffn),
        output_head: config.vocab_size as u128 * d,
    }
}
