//! Transformer building blocks expressed on top of [`Graph`].
//!
//! Sub-layers use post-norm residuals: `LayerNorm(x + Dropout(sublayer(x)))`.

use rand::Rng;

use super::{AttnMask, Graph, ModelConfig, NodeId, ParamId, ParamStore, Tensor};

#[derive(Debug, Clone, Copy)]
pub struct Linear {
    pub weight: ParamId,
    pub bias: ParamId,
}

impl Linear {
    /// Weight `[fan_in, fan_out]` and bias drawn from `U(-1/sqrt(fan_in), 1/sqrt(fan_in))`.
    pub fn new<R: Rng>(store: &mut ParamStore, name: &str, fan_in: usize, fan_out: usize, rng: &mut R) -> Self {
        Self {
            weight: store.add_uniform(format!("{name}.w"), &[fan_in, fan_out], fan_in, rng),
            bias: store.add_uniform(format!("{name}.b"), &[fan_out], fan_in, rng),
        }
    }

    pub fn forward(&self, g: &mut Graph, x: NodeId) -> NodeId {
        let w = g.param(self.weight);
        let b = g.param(self.bias);
        let xw = g.matmul(x, w);
        g.add_bias(xw, b)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct LayerNorm {
    pub gamma: ParamId,
    pub beta: ParamId,
}

impl LayerNorm {
    pub fn new(store: &mut ParamStore, name: &str, width: usize) -> Self {
        Self {
            gamma: store.add_const(format!("{name}.gamma"), &[width], 1.0),
            beta: store.add_const(format!("{name}.beta"), &[width], 0.0),
        }
    }

    pub fn forward(&self, g: &mut Graph, x: NodeId) -> NodeId {
        let gamma = g.param(self.gamma);
        let beta = g.param(self.beta);
        g.layer_norm(x, gamma, beta)
    }
}

/// `softmax(Q Kᵀ / sqrt(d_k) + mask) V` on graph nodes.
pub fn scaled_dot_product_attention(g: &mut Graph, q: NodeId, k: NodeId, v: NodeId, mask: Option<&AttnMask>) -> NodeId {
    let d_k = g.value(q).cols();
    let scores = g.matmul_bt(q, k);
    let scaled = g.scale(scores, 1.0 / (d_k as f64).sqrt());
    let weights = g.softmax(scaled, mask);
    g.matmul(weights, v)
}

#[derive(Debug, Clone)]
pub struct MultiHeadAttention {
    pub query: Linear,
    pub key: Linear,
    pub value: Linear,
    pub output: Linear,
    pub heads: usize,
}

impl MultiHeadAttention {
    pub fn new<R: Rng>(store: &mut ParamStore, name: &str, d_model: usize, heads: usize, rng: &mut R) -> Self {
        Self {
            query: Linear::new(store, &format!("{name}.q"), d_model, d_model, rng),
            key: Linear::new(store, &format!("{name}.k"), d_model, d_model, rng),
            value: Linear::new(store, &format!("{name}.v"), d_model, d_model, rng),
            output: Linear::new(store, &format!("{name}.o"), d_model, d_model, rng),
            heads,
        }
    }

    pub fn forward(&self, g: &mut Graph, queries: NodeId, memory: NodeId, mask: Option<&AttnMask>) -> NodeId {
        let q = self.query.forward(g, queries);
        let k = self.key.forward(g, memory);
        let v = self.value.forward(g, memory);
        let d_model = g.value(q).cols();
        let d_head = d_model / self.heads;
        let mut outs = Vec::with_capacity(self.heads);
        for h in 0..self.heads {
            let qh = g.slice_cols(q, h * d_head, d_head);
            let kh = g.slice_cols(k, h * d_head, d_head);
            let vh = g.slice_cols(v, h * d_head, d_head);
            outs.push(scaled_dot_product_attention(g, qh, kh, vh, mask));
        }
        let joined = if outs.len() == 1 { outs[0] } else { g.concat_cols(&outs) };
        self.output.forward(g, joined)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct FeedForward {
    pub inner: Linear,
    pub outer: Linear,
}

impl FeedForward {
    pub fn new<R: Rng>(store: &mut ParamStore, name: &str, d_model: usize, d_ff: usize, rng: &mut R) -> Self {
        Self {
            inner: Linear::new(store, &format!("{name}.inner"), d_model, d_ff, rng),
            outer: Linear::new(store, &format!("{name}.outer"), d_ff, d_model, rng),
        }
    }

    pub fn forward(&self, g: &mut Graph, x: NodeId) -> NodeId {
        let h = self.inner.forward(g, x);
        let h = g.relu(h);
        self.outer.forward(g, h)
    }
}

fn residual(g: &mut Graph, x: NodeId, sub: NodeId, norm: &LayerNorm) -> NodeId {
    let dropped = g.dropout(sub);
    let sum = g.add(x, dropped);
    norm.forward(g, sum)
}

#[derive(Debug, Clone)]
pub struct EncoderLayer {
    pub attention: MultiHeadAttention,
    pub attention_norm: LayerNorm,
    pub feed_forward: FeedForward,
    pub feed_forward_norm: LayerNorm,
}

impl EncoderLayer {
    pub fn new<R: Rng>(store: &mut ParamStore, name: &str, cfg: &ModelConfig, rng: &mut R) -> Self {
        Self {
            attention: MultiHeadAttention::new(store, &format!("{name}.attn"), cfg.d_model, cfg.heads, rng),
            attention_norm: LayerNorm::new(store, &format!("{name}.attn_norm"), cfg.d_model),
            feed_forward: FeedForward::new(store, &format!("{name}.ff"), cfg.d_model, cfg.d_ff, rng),
            feed_forward_norm: LayerNorm::new(store, &format!("{name}.ff_norm"), cfg.d_model),
        }
    }

    pub fn forward(&self, g: &mut Graph, x: NodeId) -> NodeId {
        let a = self.attention.forward(g, x, x, None);
        let x = residual(g, x, a, &self.attention_norm);
        let f = self.feed_forward.forward(g, x);
        residual(g, x, f, &self.feed_forward_norm)
    }
}

#[derive(Debug, Clone)]
pub struct DecoderLayer {
    pub self_attention: MultiHeadAttention,
    pub self_attention_norm: LayerNorm,
    pub cross_attention: MultiHeadAttention,
    pub cross_attention_norm: LayerNorm,
    pub feed_forward: FeedForward,
    pub feed_forward_norm: LayerNorm,
}

impl DecoderLayer {
    pub fn new<R: Rng>(store: &mut ParamStore, name: &str, cfg: &ModelConfig, rng: &mut R) -> Self {
        Self {
            self_attention: MultiHeadAttention::new(store, &format!("{name}.self_attn"), cfg.d_model, cfg.heads, rng),
            self_attention_norm: LayerNorm::new(store, &format!("{name}.self_attn_norm"), cfg.d_model),
            cross_attention: MultiHeadAttention::new(store, &format!("{name}.cross_attn"), cfg.d_model, cfg.heads, rng),
            cross_attention_norm: LayerNorm::new(store, &format!("{name}.cross_attn_norm"), cfg.d_model),
            feed_forward: FeedForward::new(store, &format!("{name}.ff"), cfg.d_model, cfg.d_ff, rng),
            feed_forward_norm: LayerNorm::new(store, &format!("{name}.ff_norm"), cfg.d_model),
        }
    }

    pub fn forward(&self, g: &mut Graph, x: NodeId, memory: NodeId, causal: &AttnMask) -> NodeId {
        let a = self.self_attention.forward(g, x, x, Some(causal));
        let x = residual(g, x, a, &self.self_attention_norm);
        let c = self.cross_attention.forward(g, x, memory, None);
        let x = residual(g, x, c, &self.cross_attention_norm);
        let f = self.feed_forward.forward(g, x);
        residual(g, x, f, &self.feed_forward_norm)
    }
}

/// Fixed sinusoidal position encodings, `[len, d_model]`.
pub fn sinusoidal_positions(len: usize, d_model: usize) -> Tensor {
    let mut data = vec![0.0f64; len * d_model];
    for pos in 0..len {
        for i in (0..d_model).step_by(2) {
            let angle = pos as f64 / 10000f64.powf(i as f64 / d_model as f64);
            data[pos * d_model + i] = angle.sin();
            if i + 1 < d_model {
                data[pos * d_model + i + 1] = angle.cos();
            }
        }
    }
    Tensor::matrix(len, d_model, data)
}

/// Token embedding table shared by encoder input, decoder input and (when
/// tied) the output projection.
#[derive(Debug, Clone, Copy)]
pub struct TokenEmbedding {
    pub table: ParamId,
    pub d_model: usize,
}

impl TokenEmbedding {
    /// Entries drawn from `N(0, d_model^-0.5)`.
    pub fn new<R: Rng>(store: &mut ParamStore, name: &str, vocab: usize, d_model: usize, rng: &mut R) -> Self {
        Self {
            table: store.add_normal(name, &[vocab, d_model], (d_model as f64).powf(-0.5), rng),
            d_model,
        }
    }

    /// `sqrt(d_model) * E[ids] + PE`, then dropout.
    pub fn forward(&self, g: &mut Graph, ids: &[usize]) -> NodeId {
        let table = g.param(self.table);
        let rows = g.gather(table, ids);
        let scaled = g.scale(rows, (self.d_model as f64).sqrt());
        let pe = g.input(sinusoidal_positions(ids.len(), self.d_model));
        let summed = g.add(scaled, pe);
        g.dropout(summed)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn positions_start_with_sin_cos_of_zero() {
        let pe = sinusoidal_positions(3, 4);
        assert_eq!(pe.row(0), &[0.0, 1.0, 0.0, 1.0]);
        assert!((pe.get(1, 0) - 1f64.sin()).abs() < 1e-6);
        assert!((pe.get(1, 2) - (0.01f64).sin()).abs() < 1e-6);
    }
}
