//! Parameter containers. The same types hold gradients and optimizer moments.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::tensor::Matrix;
use super::ModelConfig;
use crate::tokenizer::TOKENS_PER_NOTE;
use crate::Scalar;

#[derive(Debug, Clone, PartialEq)]
pub struct AttentionParams<T> {
    pub wq: Matrix<T>,
    pub wk: Matrix<T>,
    pub wv: Matrix<T>,
    pub wo: Matrix<T>,
}

/// Gated feed-forward: `down(gelu(gate·x) ⊙ up·x)`.
#[derive(Debug, Clone, PartialEq)]
pub struct FeedForwardParams<T> {
    pub gate: Matrix<T>,
    pub up: Matrix<T>,
    pub down: Matrix<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EncoderLayerParams<T> {
    pub attn_norm: Matrix<T>,
    pub attn: AttentionParams<T>,
    pub ffn_norm: Matrix<T>,
    pub ffn: FeedForwardParams<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecoderLayerParams<T> {
    pub self_norm: Matrix<T>,
    pub self_attn: AttentionParams<T>,
    pub cross_norm: Matrix<T>,
    pub cross_attn: AttentionParams<T>,
    pub ffn_norm: Matrix<T>,
    pub ffn: FeedForwardParams<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Params<T> {
    /// Token embeddings (vocab × d), shared by encoder and decoder inputs.
    pub embedding: Matrix<T>,
    /// One (d × d) projection per frame slot; a note vector is the sum of the projected slots.
    pub aggregation: Vec<Matrix<T>>,
    pub encoder: Vec<EncoderLayerParams<T>>,
    pub encoder_norm: Matrix<T>,
    pub decoder: Vec<DecoderLayerParams<T>>,
    pub decoder_norm: Matrix<T>,
    /// Output projection (vocab × d).
    pub output: Matrix<T>,
}

struct Init {
    /// `None` allocates zeros of the right shapes.
    rng: Option<ChaCha8Rng>,
}

impl Init {
    fn normal<T: Scalar>(&mut self, rows: usize, cols: usize, std: f64) -> Matrix<T> {
        let Some(rng) = self.rng.as_mut() else {
            return Matrix::zeros(rows, cols);
        };
        let dist = Normal::new(0.0, std).expect("finite std");
        Matrix::from_fn(rows, cols, |_, _| T::of(dist.sample(rng)))
    }

    fn linear<T: Scalar>(&mut self, out: usize, inp: usize) -> Matrix<T> {
        self.normal(out, inp, 1.0 / (inp as f64).sqrt())
    }

    fn attention<T: Scalar>(&mut self, d: usize) -> AttentionParams<T> {
        AttentionParams { wq: self.linear(d, d), wk: self.linear(d, d), wv: self.linear(d, d), wo: self.linear(d, d) }
    }

    fn ffn<T: Scalar>(&mut self, d: usize, f: usize) -> FeedForwardParams<T> {
        FeedForwardParams { gate: self.linear(f, d), up: self.linear(f, d), down: self.linear(d, f) }
    }
}

fn ones<T: Scalar>(d: usize) -> Matrix<T> {
    Matrix::from_fn(1, d, |_, _| T::one())
}

impl<T: Scalar> Params<T> {
    /// Seeded initialization; draws happen in f64 so f32 and f64 models agree up to rounding.
    pub fn init(config: &ModelConfig, seed: u64) -> Self {
        Self::build(config, Init { rng: Some(ChaCha8Rng::seed_from_u64(seed)) })
    }

    /// Correctly shaped, zero weights and unit norms.
    pub(crate) fn init_empty(config: &ModelConfig) -> Self {
        Self::build(config, Init { rng: None })
    }

    fn build(config: &ModelConfig, mut init: Init) -> Self {
        let (d, f, v) = (config.hidden_size, config.ffn_size, config.vocab_size);
        let embedding = init.normal(v, d, 1.0);
        let agg_std = 1.0 / ((TOKENS_PER_NOTE * d) as f64).sqrt();
        let aggregation = (0..TOKENS_PER_NOTE).map(|_| init.normal(d, d, agg_std)).collect();
        let encoder = (0..config.encoder_layers)
            .map(|_| EncoderLayerParams {
                attn_norm: ones(d),
                attn: init.attention(d),
                ffn_norm: ones(d),
                ffn: init.ffn(d, f),
            })
            .collect();
        let decoder = (0..config.decoder_layers)
            .map(|_| DecoderLayerParams {
                self_norm: ones(d),
                self_attn: init.attention(d),
                cross_norm: ones(d),
                cross_attn: init.attention(d),
                ffn_norm: ones(d),
                ffn: init.ffn(d, f),
            })
            .collect();
        let output = init.linear(v, d);
        Params { embedding, aggregation, encoder, encoder_norm: ones(d), decoder, decoder_norm: ones(d), output }
    }

    /// All-zero container with the same shapes.
    pub fn zeros_like(&self) -> Self {
        self.map(|m| Matrix::zeros(m.rows(), m.cols()))
    }

    pub fn cast<U: Scalar>(&self) -> Params<U> {
        self.map(|m| m.cast())
    }

    fn map<U>(&self, mut f: impl FnMut(&Matrix<T>) -> Matrix<U>) -> Params<U> {
        let attn = |a: &AttentionParams<T>, f: &mut dyn FnMut(&Matrix<T>) -> Matrix<U>| AttentionParams {
            wq: f(&a.wq),
            wk: f(&a.wk),
            wv: f(&a.wv),
            wo: f(&a.wo),
        };
        let ffn = |p: &FeedForwardParams<T>, f: &mut dyn FnMut(&Matrix<T>) -> Matrix<U>| FeedForwardParams {
            gate: f(&p.gate),
            up: f(&p.up),
            down: f(&p.down),
        };
        Params {
            embedding: f(&self.embedding),
            aggregation: self.aggregation.iter().map(&mut f).collect(),
            encoder: self
                .encoder
                .iter()
                .map(|l| EncoderLayerParams {
                    attn_norm: f(&l.attn_norm),
                    attn: attn(&l.attn, &mut f),
                    ffn_norm: f(&l.ffn_norm),
                    ffn: ffn(&l.ffn, &mut f),
                })
                .collect(),
            encoder_norm: f(&self.encoder_norm),
            decoder: self
                .decoder
                .iter()
                .map(|l| DecoderLayerParams {
                    self_norm: f(&l.self_norm),
                    self_attn: attn(&l.self_attn, &mut f),
                    cross_norm: f(&l.cross_norm),
                    cross_attn: attn(&l.cross_attn, &mut f),
                    ffn_norm: f(&l.ffn_norm),
                    ffn: ffn(&l.ffn, &mut f),
                })
                .collect(),
            decoder_norm: f(&self.decoder_norm),
            output: f(&self.output),
        }
    }

    /// Every tensor with its name, in the fixed checkpoint order.
    pub fn tensors(&self) -> Vec<(String, &Matrix<T>)> {
        let mut out: Vec<(String, &Matrix<T>)> = vec![("embedding".into(), &self.embedding)];
        for (s, m) in self.aggregation.iter().enumerate() {
            out.push((format!("aggregation.slot{s}"), m));
        }
        for (i, l) in self.encoder.iter().enumerate() {
            let p = format!("encoder.{i}");
            out.push((format!("{p}.attn_norm"), &l.attn_norm));
            push_attention(&mut out, &format!("{p}.attn"), &l.attn);
            out.push((format!("{p}.ffn_norm"), &l.ffn_norm));
            push_ffn(&mut out, &format!("{p}.ffn"), &l.ffn);
        }
        out.push(("encoder_norm".into(), &self.encoder_norm));
        for (i, l) in self.decoder.iter().enumerate() {
            let p = format!("decoder.{i}");
            out.push((format!("{p}.self_norm"), &l.self_norm));
            push_attention(&mut out, &format!("{p}.self_attn"), &l.self_attn);
            out.push((format!("{p}.cross_norm"), &l.cross_norm));
            push_attention(&mut out, &format!("{p}.cross_attn"), &l.cross_attn);
            out.push((format!("{p}.ffn_norm"), &l.ffn_norm));
            push_ffn(&mut out, &format!("{p}.ffn"), &l.ffn);
        }
        out.push(("decoder_norm".into(), &self.decoder_norm));
        out.push(("output".into(), &self.output));
        out
    }

    /// Same order as [`Params::tensors`].
    pub fn tensors_mut(&mut self) -> Vec<&mut Matrix<T>> {
        let mut out: Vec<&mut Matrix<T>> = vec![&mut self.embedding];
        out.extend(self.aggregation.iter_mut());
        for l in &mut self.encoder {
            out.push(&mut l.attn_norm);
            out.extend([&mut l.attn.wq, &mut l.attn.wk, &mut l.attn.wv, &mut l.attn.wo]);
            out.push(&mut l.ffn_norm);
            out.extend([&mut l.ffn.gate, &mut l.ffn.up, &mut l.ffn.down]);
        }
        out.push(&mut self.encoder_norm);
        for l in &mut self.decoder {
            out.push(&mut l.self_norm);
            out.extend([&mut l.self_attn.wq, &mut l.self_attn.wk, &mut l.self_attn.wv, &mut l.self_attn.wo]);
            out.push(&mut l.cross_norm);
            out.extend([&mut l.cross_attn.wq, &mut l.cross_attn.wk, &mut l.cross_attn.wv, &mut l.cross_attn.wo]);
            out.push(&mut l.ffn_norm);
            out.extend([&mut l.ffn.gate, &mut l.ffn.up, &mut l.ffn.down]);
        }
        out.push(&mut self.decoder_norm);
        out.push(&mut self.output);
        out
    }

    pub fn parameter_count(&self) -> usize {
        self.tensors().iter().map(|(_, m)| m.len()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|(_, m)| m.data().iter().all(|v| v.is_finite()))
    }

    pub fn scale(&mut self, s: T) {
        for m in self.tensors_mut() {
            m.scale(s);
        }
    }

    pub fn add_assign(&mut self, other: &Params<T>) {
        let theirs = other.tensors();
        for (mine, (_, t)) in self.tensors_mut().into_iter().zip(theirs) {
            mine.add_assign(t);
        }
    }

    /// Euclidean norm over every entry, accumulated in f64.
    pub fn global_norm(&self) -> f64 {
        self.tensors().iter().flat_map(|(_, m)| m.data().iter()).map(|v| v.as_f64() * v.as_f64()).sum::<f64>().sqrt()
    }
}

fn push_attention<'a, T>(out: &mut Vec<(String, &'a Matrix<T>)>, prefix: &str, a: &'a AttentionParams<T>) {
    out.push((format!("{prefix}.wq"), &a.wq));
    out.push((format!("{prefix}.wk"), &a.wk));
    out.push((format!("{prefix}.wv"), &a.wv));
    out.push((format!("{prefix}.wo"), &a.wo));
}

fn push_ffn<'a, T>(out: &mut Vec<(String, &'a Matrix<T>)>, prefix: &str, f: &'a FeedForwardParams<T>) {
    out.push((format!("{prefix}.gate"), &f.gate));
    out.push((format!("{prefix}.up"), &f.up));
    out.push((format!("{prefix}.down"), &f.down));
}
