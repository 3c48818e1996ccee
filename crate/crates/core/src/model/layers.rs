//! Forward and backward kernels for the transformer blocks.

use super::params::{AttentionParams, FeedForwardParams};
use super::tensor::{axpy, dot, linear, linear_backward, Matrix};
use crate::Scalar;

const NORM_EPS: f64 = 1e-6;
const ROPE_BASE: f64 = 10_000.0;

pub(crate) struct NormCache<T> {
    x: Matrix<T>,
    inv_rms: Vec<T>,
}

/// `y = g ⊙ x / rms(x)`, row-wise.
pub(crate) fn rms_norm<T: Scalar>(x: &Matrix<T>, g: &Matrix<T>) -> (Matrix<T>, NormCache<T>) {
    let n = T::of(x.cols() as f64);
    let eps = T::of(NORM_EPS);
    let mut y = Matrix::zeros(x.rows(), x.cols());
    let mut inv_rms = Vec::with_capacity(x.rows());
    for r in 0..x.rows() {
        let row = x.row(r);
        let inv = (dot(row, row) / n + eps).sqrt().recip();
        for ((out, &v), &w) in y.row_mut(r).iter_mut().zip(row).zip(g.data()) {
            *out = v * inv * w;
        }
        inv_rms.push(inv);
    }
    (y, NormCache { x: x.clone(), inv_rms })
}

pub(crate) fn rms_norm_backward<T: Scalar>(
    dy: &Matrix<T>,
    g: &Matrix<T>,
    cache: &NormCache<T>,
    dg: &mut Matrix<T>,
) -> Matrix<T> {
    let n = T::of(cache.x.cols() as f64);
    let mut dx = Matrix::zeros(cache.x.rows(), cache.x.cols());
    for r in 0..dy.rows() {
        let (x, dyr, inv) = (cache.x.row(r), dy.row(r), cache.inv_rms[r]);
        let mut proj = T::zero();
        for ((&d, &w), &xv) in dyr.iter().zip(g.data()).zip(x) {
            proj += d * w * xv;
        }
        let coeff = inv * inv * inv * proj / n;
        for (c, ((&d, &w), &xv)) in dyr.iter().zip(g.data()).zip(x).enumerate() {
            dg.data_mut()[c] += d * xv * inv;
            dx.row_mut(r)[c] = inv * d * w - coeff * xv;
        }
    }
    dx
}

pub(crate) struct Rope<T> {
    half: usize,
    cos: Vec<T>,
    sin: Vec<T>,
}

impl<T: Scalar> Rope<T> {
    pub(crate) fn new(len: usize, head_dim: usize) -> Self {
        Self::span(0, len, head_dim)
    }

    /// Angles for positions `start..start + len`; row `r` of a rotated matrix sits at `start + r`.
    pub(crate) fn span(start: usize, len: usize, head_dim: usize) -> Self {
        let half = head_dim / 2;
        let mut cos = Vec::with_capacity(len * half);
        let mut sin = Vec::with_capacity(len * half);
        for pos in start..start + len {
            for i in 0..half {
                let freq = ROPE_BASE.powf(-(2.0 * i as f64) / head_dim as f64);
                let angle = pos as f64 * freq;
                cos.push(T::of(angle.cos()));
                sin.push(T::of(angle.sin()));
            }
        }
        Rope { half, cos, sin }
    }

    /// Rotates each head's (i, i + half) pairs by the row's position angle; `inverse` undoes it.
    pub(crate) fn apply(&self, m: &mut Matrix<T>, heads: usize, inverse: bool) {
        let hd = 2 * self.half;
        for pos in 0..m.rows() {
            let (cos, sin) = (&self.cos[pos * self.half..], &self.sin[pos * self.half..]);
            let row = m.row_mut(pos);
            for h in 0..heads {
                let head = &mut row[h * hd..(h + 1) * hd];
                for i in 0..self.half {
                    let s = if inverse { -sin[i] } else { sin[i] };
                    let (a, b) = (head[i], head[i + self.half]);
                    head[i] = a * cos[i] - b * s;
                    head[i + self.half] = a * s + b * cos[i];
                }
            }
        }
    }
}

#[derive(Clone, Copy)]
pub(crate) struct AttentionShape {
    pub heads: usize,
    pub head_dim: usize,
    pub causal: bool,
    pub rotary: bool,
}

pub(crate) struct AttentionCache<T> {
    xq: Matrix<T>,
    xkv: Matrix<T>,
    q: Matrix<T>,
    k: Matrix<T>,
    v: Matrix<T>,
    /// heads × Tq × Tk, row-stochastic.
    probs: Vec<T>,
    ctx: Matrix<T>,
    shape: AttentionShape,
}

impl<T: Scalar> AttentionCache<T> {
    /// One probability row per (head, query).
    #[cfg(test)]
    pub(crate) fn prob_rows(&self) -> std::slice::ChunksExact<'_, T> {
        self.probs.chunks_exact(self.k.rows())
    }
}

#[allow(clippy::needless_range_loop)]
pub(crate) fn attention<T: Scalar>(
    p: &AttentionParams<T>,
    xq: &Matrix<T>,
    xkv: &Matrix<T>,
    shape: AttentionShape,
) -> (Matrix<T>, AttentionCache<T>) {
    let (tq, tk, hd) = (xq.rows(), xkv.rows(), shape.head_dim);
    let mut q = linear(xq, &p.wq);
    let mut k = linear(xkv, &p.wk);
    let v = linear(xkv, &p.wv);
    if shape.rotary {
        Rope::new(tq, hd).apply(&mut q, shape.heads, false);
        Rope::new(tk, hd).apply(&mut k, shape.heads, false);
    }
    let scale = T::of(1.0 / (hd as f64).sqrt());
    let mut probs = vec![T::zero(); shape.heads * tq * tk];
    let mut ctx = Matrix::zeros(tq, q.cols());
    for h in 0..shape.heads {
        let cols = h * hd..(h + 1) * hd;
        for i in 0..tq {
            let visible = if shape.causal { (i + 1).min(tk) } else { tk };
            let prow = &mut probs[(h * tq + i) * tk..(h * tq + i + 1) * tk];
            let qi = &q.row(i)[cols.clone()];
            let mut max = T::neg_infinity();
            for j in 0..visible {
                prow[j] = dot(qi, &k.row(j)[cols.clone()]) * scale;
                max = max.max(prow[j]);
            }
            let mut sum = T::zero();
            for pj in prow.iter_mut().take(visible) {
                *pj = (*pj - max).exp();
                sum += *pj;
            }
            let out = &mut ctx.row_mut(i)[cols.clone()];
            for j in 0..visible {
                prow[j] /= sum;
                axpy(prow[j], &v.row(j)[cols.clone()], out);
            }
        }
    }
    let y = linear(&ctx, &p.wo);
    let cache = AttentionCache { xq: xq.clone(), xkv: xkv.clone(), q, k, v, probs, ctx, shape };
    (y, cache)
}

/// Returns gradients with respect to the query source and the key/value source.
#[allow(clippy::needless_range_loop)]
pub(crate) fn attention_backward<T: Scalar>(
    p: &AttentionParams<T>,
    grads: &mut AttentionParams<T>,
    cache: &AttentionCache<T>,
    dy: &Matrix<T>,
) -> (Matrix<T>, Matrix<T>) {
    let shape = cache.shape;
    let (tq, tk, hd) = (cache.q.rows(), cache.k.rows(), shape.head_dim);
    let scale = T::of(1.0 / (hd as f64).sqrt());
    let dctx = linear_backward(dy, &cache.ctx, &p.wo, &mut grads.wo);

    let mut dq = Matrix::zeros(tq, cache.q.cols());
    let mut dk = Matrix::zeros(tk, cache.k.cols());
    let mut dv = Matrix::zeros(tk, cache.v.cols());
    let mut dp = vec![T::zero(); tk];
    for h in 0..shape.heads {
        let cols = h * hd..(h + 1) * hd;
        for i in 0..tq {
            let visible = if shape.causal { (i + 1).min(tk) } else { tk };
            let prow = &cache.probs[(h * tq + i) * tk..(h * tq + i + 1) * tk];
            let dci = &dctx.row(i)[cols.clone()];
            let mut weighted = T::zero();
            for j in 0..visible {
                dp[j] = dot(dci, &cache.v.row(j)[cols.clone()]);
                weighted += dp[j] * prow[j];
                axpy(prow[j], dci, &mut dv.row_mut(j)[cols.clone()]);
            }
            for j in 0..visible {
                let ds = prow[j] * (dp[j] - weighted) * scale;
                if ds == T::zero() {
                    continue;
                }
                axpy(ds, &cache.k.row(j)[cols.clone()], &mut dq.row_mut(i)[cols.clone()]);
                axpy(ds, &cache.q.row(i)[cols.clone()], &mut dk.row_mut(j)[cols.clone()]);
            }
        }
    }
    if shape.rotary {
        Rope::new(tq, hd).apply(&mut dq, shape.heads, true);
        Rope::new(tk, hd).apply(&mut dk, shape.heads, true);
    }
    let dxq = linear_backward(&dq, &cache.xq, &p.wq, &mut grads.wq);
    let mut dxkv = linear_backward(&dk, &cache.xkv, &p.wk, &mut grads.wk);
    dxkv.add_assign(&linear_backward(&dv, &cache.xkv, &p.wv, &mut grads.wv));
    (dxq, dxkv)
}

/// Attention output for a single query row against stored key and value rows.
pub(crate) fn attend_one<T: Scalar>(q: &[T], keys: &[T], values: &[T], shape: AttentionShape) -> Vec<T> {
    let width = q.len();
    let rows = keys.len() / width;
    let hd = shape.head_dim;
    let scale = T::of(1.0 / (hd as f64).sqrt());
    let mut ctx = vec![T::zero(); width];
    let mut scores = vec![T::zero(); rows];
    for h in 0..shape.heads {
        let cols = h * hd..(h + 1) * hd;
        let mut max = T::neg_infinity();
        for (j, s) in scores.iter_mut().enumerate() {
            *s = dot(&q[cols.clone()], &keys[j * width..][cols.clone()]) * scale;
            max = max.max(*s);
        }
        let mut sum = T::zero();
        for s in scores.iter_mut() {
            *s = (*s - max).exp();
            sum += *s;
        }
        for (j, s) in scores.iter().enumerate() {
            axpy(*s / sum, &values[j * width..][cols.clone()], &mut ctx[cols.clone()]);
        }
    }
    ctx
}

pub(crate) struct FeedForwardCache<T> {
    x: Matrix<T>,
    gate: Matrix<T>,
    up: Matrix<T>,
    hidden: Matrix<T>,
}

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2 / pi)
const GELU_A: f64 = 0.044_715;

fn gelu<T: Scalar>(a: T) -> T {
    let u = T::of(GELU_C) * (a + T::of(GELU_A) * a * a * a);
    T::of(0.5) * a * (T::one() + u.tanh())
}

fn gelu_grad<T: Scalar>(a: T) -> T {
    let u = T::of(GELU_C) * (a + T::of(GELU_A) * a * a * a);
    let t = u.tanh();
    let du = T::of(GELU_C) * (T::one() + T::of(3.0 * GELU_A) * a * a);
    T::of(0.5) * (T::one() + t) + T::of(0.5) * a * (T::one() - t * t) * du
}

pub(crate) fn feed_forward<T: Scalar>(p: &FeedForwardParams<T>, x: &Matrix<T>) -> (Matrix<T>, FeedForwardCache<T>) {
    let gate = linear(x, &p.gate);
    let up = linear(x, &p.up);
    let mut hidden = Matrix::zeros(gate.rows(), gate.cols());
    for ((h, &g), &u) in hidden.data_mut().iter_mut().zip(gate.data()).zip(up.data()) {
        *h = gelu(g) * u;
    }
    let y = linear(&hidden, &p.down);
    (y, FeedForwardCache { x: x.clone(), gate, up, hidden })
}

pub(crate) fn feed_forward_backward<T: Scalar>(
    p: &FeedForwardParams<T>,
    grads: &mut FeedForwardParams<T>,
    cache: &FeedForwardCache<T>,
    dy: &Matrix<T>,
) -> Matrix<T> {
    let dhidden = linear_backward(dy, &cache.hidden, &p.down, &mut grads.down);
    let mut dgate = Matrix::zeros(dhidden.rows(), dhidden.cols());
    let mut dup = Matrix::zeros(dhidden.rows(), dhidden.cols());
    for i in 0..dhidden.len() {
        let (dh, g, u) = (dhidden.data()[i], cache.gate.data()[i], cache.up.data()[i]);
        dgate.data_mut()[i] = dh * u * gelu_grad(g);
        dup.data_mut()[i] = dh * gelu(g);
    }
    let mut dx = linear_backward(&dgate, &cache.x, &p.gate, &mut grads.gate);
    dx.add_assign(&linear_backward(&dup, &cache.x, &p.up, &mut grads.up));
    dx
}
