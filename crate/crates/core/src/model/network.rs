//! Whole-network forward pass with caches, and the matching backward pass.

use super::layers::{
    attend_one, attention, attention_backward, feed_forward, feed_forward_backward, rms_norm, rms_norm_backward,
    AttentionCache, AttentionShape, FeedForwardCache, NormCache,
};
use super::params::Params;
use super::tensor::{linear, linear_backward, Matrix};
use super::{Model, ModelError};
use crate::tokenizer::{TokenId, TOKENS_PER_NOTE};
use crate::Scalar;

struct EncoderLayerCache<T> {
    attn_norm: NormCache<T>,
    attn: AttentionCache<T>,
    ffn_norm: NormCache<T>,
    ffn: FeedForwardCache<T>,
}

struct DecoderLayerCache<T> {
    self_norm: NormCache<T>,
    self_attn: AttentionCache<T>,
    cross_norm: NormCache<T>,
    cross_attn: AttentionCache<T>,
    ffn_norm: NormCache<T>,
    ffn: FeedForwardCache<T>,
}

pub(crate) struct EncoderCache<T> {
    tokens: Vec<TokenId>,
    embedded: Matrix<T>,
    layers: Vec<EncoderLayerCache<T>>,
    final_norm: NormCache<T>,
}

pub(crate) struct DecoderCache<T> {
    tokens: Vec<TokenId>,
    layers: Vec<DecoderLayerCache<T>>,
    final_norm: NormCache<T>,
    normed: Matrix<T>,
}

pub(crate) struct ForwardCache<T> {
    encoder: EncoderCache<T>,
    decoder: DecoderCache<T>,
}

impl<T: Scalar> ForwardCache<T> {
    /// Every attention probability row computed in the pass.
    #[cfg(test)]
    pub(crate) fn attention_rows(&self) -> Vec<&[T]> {
        let enc = self.encoder.layers.iter().map(|l| &l.attn);
        let dec = self.decoder.layers.iter().flat_map(|l| [&l.self_attn, &l.cross_attn]);
        enc.chain(dec).flat_map(|c| c.prob_rows()).collect()
    }
}

fn embed<T: Scalar>(table: &Matrix<T>, tokens: &[TokenId]) -> Result<Matrix<T>, ModelError> {
    let mut out = Matrix::zeros(tokens.len(), table.cols());
    for (i, &t) in tokens.iter().enumerate() {
        if t as usize >= table.rows() {
            return Err(ModelError::BadToken(t));
        }
        out.row_mut(i).copy_from_slice(table.row(t as usize));
    }
    Ok(out)
}

fn scatter_rows<T: Scalar>(grad: &mut Matrix<T>, tokens: &[TokenId], rows: &Matrix<T>) {
    for (i, &t) in tokens.iter().enumerate() {
        for (g, &v) in grad.row_mut(t as usize).iter_mut().zip(rows.row(i)) {
            *g += v;
        }
    }
}

/// Rows of `embedded` that belong to slot `s` of every frame.
fn slot_rows<T: Scalar>(embedded: &Matrix<T>, s: usize) -> Matrix<T> {
    let notes = embedded.rows() / TOKENS_PER_NOTE;
    Matrix::from_fn(notes, embedded.cols(), |n, c| embedded.get(n * TOKENS_PER_NOTE + s, c))
}

/// `memory[n] = Σ_s slot[s] · embeddings[8n + s]` where `embeddings` holds one row per token.
pub fn aggregate_notes<T: Scalar>(embeddings: &Matrix<T>, slots: &[Matrix<T>]) -> Result<Matrix<T>, ModelError> {
    if slots.len() != TOKENS_PER_NOTE {
        return Err(ModelError::BadShape(format!("expected {TOKENS_PER_NOTE} slot matrices, got {}", slots.len())));
    }
    if !embeddings.rows().is_multiple_of(TOKENS_PER_NOTE) {
        return Err(ModelError::BadShape(format!("{} embeddings do not form whole notes", embeddings.rows())));
    }
    let d = embeddings.cols();
    if slots.iter().any(|m| m.rows() != d || m.cols() != d) {
        return Err(ModelError::BadShape("slot matrices must be d×d".into()));
    }
    let mut memory = Matrix::zeros(embeddings.rows() / TOKENS_PER_NOTE, d);
    for (s, w) in slots.iter().enumerate() {
        memory.add_assign(&linear(&slot_rows(embeddings, s), w));
    }
    Ok(memory)
}

fn shapes<T: Scalar>(model: &Model<T>) -> (AttentionShape, AttentionShape, AttentionShape) {
    let heads = model.config.heads();
    let head_dim = model.config.head_dim;
    let base = AttentionShape { heads, head_dim, causal: false, rotary: true };
    (base, AttentionShape { causal: true, ..base }, AttentionShape { rotary: false, ..base })
}

fn encode_cached<T: Scalar>(model: &Model<T>, tokens: &[TokenId]) -> Result<(Matrix<T>, EncoderCache<T>), ModelError> {
    if tokens.is_empty() || !tokens.len().is_multiple_of(TOKENS_PER_NOTE) {
        return Err(ModelError::BadShape(format!(
            "encoder length {} is not a positive multiple of {TOKENS_PER_NOTE}",
            tokens.len()
        )));
    }
    if tokens.len() > model.config.max_seq_len {
        return Err(ModelError::BadShape(format!(
            "encoder length {} exceeds the limit {}",
            tokens.len(),
            model.config.max_seq_len
        )));
    }
    let p = &model.params;
    let (bidirectional, _, _) = shapes(model);
    let embedded = embed(&p.embedding, tokens)?;
    let mut h = aggregate_notes(&embedded, &p.aggregation)?;
    let mut layers = Vec::with_capacity(p.encoder.len());
    for layer in &p.encoder {
        let (a, attn_norm) = rms_norm(&h, &layer.attn_norm);
        let (y, attn) = attention(&layer.attn, &a, &a, bidirectional);
        h.add_assign(&y);
        let (b, ffn_norm) = rms_norm(&h, &layer.ffn_norm);
        let (y, ffn) = feed_forward(&layer.ffn, &b);
        h.add_assign(&y);
        layers.push(EncoderLayerCache { attn_norm, attn, ffn_norm, ffn });
    }
    let (memory, final_norm) = rms_norm(&h, &p.encoder_norm);
    Ok((memory, EncoderCache { tokens: tokens.to_vec(), embedded, layers, final_norm }))
}

pub(crate) fn encode<T: Scalar>(
    model: &Model<T>,
    tokens: &[TokenId],
) -> Result<(Matrix<T>, EncoderCache<T>), ModelError> {
    encode_cached(model, tokens)
}

pub(crate) fn decode<T: Scalar>(
    model: &Model<T>,
    memory: &Matrix<T>,
    tokens: &[TokenId],
) -> Result<(Matrix<T>, DecoderCache<T>), ModelError> {
    if tokens.is_empty() {
        return Err(ModelError::BadShape("decoder input is empty".into()));
    }
    if memory.cols() != model.config.hidden_size || memory.rows() == 0 {
        return Err(ModelError::BadShape("memory does not match the model width".into()));
    }
    let p = &model.params;
    let (_, causal, cross) = shapes(model);
    let mut x = embed(&p.embedding, tokens)?;
    let mut layers = Vec::with_capacity(p.decoder.len());
    for layer in &p.decoder {
        let (a, self_norm) = rms_norm(&x, &layer.self_norm);
        let (y, self_attn) = attention(&layer.self_attn, &a, &a, causal);
        x.add_assign(&y);
        let (b, cross_norm) = rms_norm(&x, &layer.cross_norm);
        let (y, cross_attn) = attention(&layer.cross_attn, &b, memory, cross);
        x.add_assign(&y);
        let (c, ffn_norm) = rms_norm(&x, &layer.ffn_norm);
        let (y, ffn) = feed_forward(&layer.ffn, &c);
        x.add_assign(&y);
        layers.push(DecoderLayerCache { self_norm, self_attn, cross_norm, cross_attn, ffn_norm, ffn });
    }
    let (normed, final_norm) = rms_norm(&x, &p.decoder_norm);
    let logits = linear(&normed, &p.output);
    Ok((logits, DecoderCache { tokens: tokens.to_vec(), layers, final_norm, normed }))
}

pub(crate) fn forward<T: Scalar>(
    model: &Model<T>,
    encoder: &[TokenId],
    decoder: &[TokenId],
) -> Result<(Matrix<T>, ForwardCache<T>), ModelError> {
    let (memory, encoder) = encode_cached(model, encoder)?;
    let (logits, decoder) = decode(model, &memory, decoder)?;
    Ok((logits, ForwardCache { encoder, decoder }))
}

pub(crate) fn backward<T: Scalar>(model: &Model<T>, cache: &ForwardCache<T>, dlogits: &Matrix<T>) -> Params<T> {
    let p = &model.params;
    let mut g = p.zeros_like();
    let dec = &cache.decoder;

    let dnormed = linear_backward(dlogits, &dec.normed, &p.output, &mut g.output);
    let mut dx = rms_norm_backward(&dnormed, &p.decoder_norm, &dec.final_norm, &mut g.decoder_norm);
    let memory_rows = cache.encoder.embedded.rows() / TOKENS_PER_NOTE;
    let mut dmemory = Matrix::zeros(memory_rows, model.config.hidden_size);
    for ((layer, lc), lg) in p.decoder.iter().zip(&dec.layers).zip(g.decoder.iter_mut()).rev() {
        let dc = feed_forward_backward(&layer.ffn, &mut lg.ffn, &lc.ffn, &dx);
        dx.add_assign(&rms_norm_backward(&dc, &layer.ffn_norm, &lc.ffn_norm, &mut lg.ffn_norm));
        let (db, dmem) = attention_backward(&layer.cross_attn, &mut lg.cross_attn, &lc.cross_attn, &dx);
        dmemory.add_assign(&dmem);
        dx.add_assign(&rms_norm_backward(&db, &layer.cross_norm, &lc.cross_norm, &mut lg.cross_norm));
        let (mut da, dkv) = attention_backward(&layer.self_attn, &mut lg.self_attn, &lc.self_attn, &dx);
        da.add_assign(&dkv);
        dx.add_assign(&rms_norm_backward(&da, &layer.self_norm, &lc.self_norm, &mut lg.self_norm));
    }
    scatter_rows(&mut g.embedding, &dec.tokens, &dx);

    let enc = &cache.encoder;
    let mut dh = rms_norm_backward(&dmemory, &p.encoder_norm, &enc.final_norm, &mut g.encoder_norm);
    for ((layer, lc), lg) in p.encoder.iter().zip(&enc.layers).zip(g.encoder.iter_mut()).rev() {
        let db = feed_forward_backward(&layer.ffn, &mut lg.ffn, &lc.ffn, &dh);
        dh.add_assign(&rms_norm_backward(&db, &layer.ffn_norm, &lc.ffn_norm, &mut lg.ffn_norm));
        let (mut da, dkv) = attention_backward(&layer.attn, &mut lg.attn, &lc.attn, &dh);
        da.add_assign(&dkv);
        dh.add_assign(&rms_norm_backward(&da, &layer.attn_norm, &lc.attn_norm, &mut lg.attn_norm));
    }
    let mut dembedded = Matrix::zeros(enc.embedded.rows(), enc.embedded.cols());
    for (s, (w, dw)) in p.aggregation.iter().zip(g.aggregation.iter_mut()).enumerate() {
        let de = linear_backward(&dh, &slot_rows(&enc.embedded, s), w, dw);
        for n in 0..de.rows() {
            dembedded.row_mut(n * TOKENS_PER_NOTE + s).copy_from_slice(de.row(n));
        }
    }
    scatter_rows(&mut g.embedding, &enc.tokens, &dembedded);
    g
}

struct LayerState<T> {
    self_keys: Vec<T>,
    self_values: Vec<T>,
    cross_keys: Matrix<T>,
    cross_values: Matrix<T>,
}

/// Token-at-a-time decoding that keeps self-attention keys and values between steps.
///
/// Produces the same logits as a full decoder pass over the pushed tokens.
pub struct IncrementalDecoder<T> {
    layers: Vec<LayerState<T>>,
    tokens: Vec<TokenId>,
}

impl<T: Scalar> IncrementalDecoder<T> {
    pub fn new(model: &Model<T>, memory: &Matrix<T>) -> Result<Self, ModelError> {
        if memory.cols() != model.config.hidden_size || memory.rows() == 0 {
            return Err(ModelError::BadShape("memory does not match the model width".into()));
        }
        let mut layers = Vec::with_capacity(model.params.decoder.len());
        for layer in &model.params.decoder {
            layers.push(LayerState {
                self_keys: Vec::new(),
                self_values: Vec::new(),
                cross_keys: linear(memory, &layer.cross_attn.wk),
                cross_values: linear(memory, &layer.cross_attn.wv),
            });
        }
        Ok(IncrementalDecoder { layers, tokens: Vec::new() })
    }

    pub fn tokens(&self) -> &[TokenId] {
        &self.tokens
    }

    /// Appends `token` and returns the logits for the token after it.
    pub fn push(&mut self, model: &Model<T>, token: TokenId) -> Result<Vec<T>, ModelError> {
        let p = &model.params;
        let (_, causal, cross) = shapes(model);
        let pos = self.tokens.len();
        let rope = super::layers::Rope::span(pos, 1, model.config.head_dim);
        let mut x = embed(&p.embedding, &[token])?;
        for (layer, state) in p.decoder.iter().zip(self.layers.iter_mut()) {
            let (a, _) = rms_norm(&x, &layer.self_norm);
            let mut q = linear(&a, &layer.self_attn.wq);
            let mut k = linear(&a, &layer.self_attn.wk);
            rope.apply(&mut q, causal.heads, false);
            rope.apply(&mut k, causal.heads, false);
            state.self_keys.extend_from_slice(k.data());
            state.self_values.extend_from_slice(linear(&a, &layer.self_attn.wv).data());
            let ctx = attend_one(q.data(), &state.self_keys, &state.self_values, causal);
            x.add_assign(&linear(&Matrix::from_vec(1, ctx.len(), ctx), &layer.self_attn.wo));

            let (b, _) = rms_norm(&x, &layer.cross_norm);
            let q = linear(&b, &layer.cross_attn.wq);
            let ctx = attend_one(q.data(), state.cross_keys.data(), state.cross_values.data(), cross);
            x.add_assign(&linear(&Matrix::from_vec(1, ctx.len(), ctx), &layer.cross_attn.wo));

            let (c, _) = rms_norm(&x, &layer.ffn_norm);
            x.add_assign(&feed_forward(&layer.ffn, &c).0);
        }
        let (normed, _) = rms_norm(&x, &p.decoder_norm);
        self.tokens.push(token);
        Ok(linear(&normed, &p.output).data().to_vec())
    }
}
