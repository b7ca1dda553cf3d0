//! Post-norm transformer stacks (encoder and decoder) built from the
//! layers in this module.

use ndarray::Array2;

use super::layers::{AttentionCache, FeedForwardCache, LayerNormCache};
use super::{AttnMask, FeedForward, Init, LayerNorm, MultiHeadAttention, ParamBuilder, ParamSet};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StackDims {
    pub vocab_size: usize,
    pub d_model: usize,
    pub num_heads: usize,
    pub d_ff: usize,
    pub num_layers: usize,
    pub max_len: usize,
    pub init_std: f64,
}

/// Token plus learned absolute position embeddings, then layer norm.
#[derive(Debug, Clone)]
pub struct Embeddings {
    pub tokens: usize,
    pub positions: usize,
    pub norm: LayerNorm,
}

#[derive(Debug, Clone)]
pub struct EmbeddingCache {
    ids: Vec<u32>,
    norm: LayerNormCache,
}

impl Embeddings {
    pub fn new(pb: &mut ParamBuilder<'_>, name: &str, dims: &StackDims) -> Self {
        Embeddings {
            tokens: pb.add(
                &format!("{name}.tokens"),
                &[dims.vocab_size, dims.d_model],
                Init::Normal(dims.init_std),
            ),
            positions: pb.add(
                &format!("{name}.positions"),
                &[dims.max_len, dims.d_model],
                Init::Normal(dims.init_std),
            ),
            norm: LayerNorm::new(pb, &format!("{name}.norm"), dims.d_model),
        }
    }

    pub fn forward(&self, p: &ParamSet, ids: &[u32]) -> (Array2<f64>, EmbeddingCache) {
        let tok = p.mat(self.tokens);
        let pos = p.mat(self.positions);
        let mut x = Array2::zeros((ids.len(), tok.ncols()));
        for (i, &id) in ids.iter().enumerate() {
            let mut row = x.row_mut(i);
            row.assign(&tok.row(id as usize));
            row += &pos.row(i);
        }
        let (y, norm) = self.norm.forward(p, &x);
        (
            y,
            EmbeddingCache {
                ids: ids.to_vec(),
                norm,
            },
        )
    }

    pub fn backward(&self, p: &ParamSet, g: &mut ParamSet, cache: &EmbeddingCache, dy: &Array2<f64>) {
        let dx = self.norm.backward(p, g, &cache.norm, dy);
        for (i, &id) in cache.ids.iter().enumerate() {
            g.mat_mut(self.tokens).row_mut(id as usize).scaled_add(1.0, &dx.row(i));
            g.mat_mut(self.positions).row_mut(i).scaled_add(1.0, &dx.row(i));
        }
    }
}

#[derive(Debug, Clone)]
pub struct EncoderLayer {
    attn: MultiHeadAttention,
    attn_norm: LayerNorm,
    ffn: FeedForward,
    ffn_norm: LayerNorm,
}

#[derive(Debug, Clone)]
struct EncoderLayerCache {
    attn: AttentionCache,
    attn_norm: LayerNormCache,
    ffn: FeedForwardCache,
    ffn_norm: LayerNormCache,
}

impl EncoderLayer {
    fn new(pb: &mut ParamBuilder<'_>, name: &str, dims: &StackDims) -> Self {
        EncoderLayer {
            attn: MultiHeadAttention::new(pb, &format!("{name}.attention"), dims.d_model, dims.num_heads, dims.init_std),
            attn_norm: LayerNorm::new(pb, &format!("{name}.attention_norm"), dims.d_model),
            ffn: FeedForward::new(pb, &format!("{name}.ffn"), dims.d_model, dims.d_ff, dims.init_std),
            ffn_norm: LayerNorm::new(pb, &format!("{name}.ffn_norm"), dims.d_model),
        }
    }

    fn forward(&self, p: &ParamSet, x: &Array2<f64>, mask: &AttnMask) -> (Array2<f64>, EncoderLayerCache) {
        let (a, attn) = self.attn.forward(p, x, x, mask);
        let (h, attn_norm) = self.attn_norm.forward(p, &(x + &a));
        let (f, ffn) = self.ffn.forward(p, &h);
        let (out, ffn_norm) = self.ffn_norm.forward(p, &(&h + &f));
        (
            out,
            EncoderLayerCache {
                attn,
                attn_norm,
                ffn,
                ffn_norm,
            },
        )
    }

    fn backward(&self, p: &ParamSet, g: &mut ParamSet, c: &EncoderLayerCache, dy: &Array2<f64>) -> Array2<f64> {
        let dr2 = self.ffn_norm.backward(p, g, &c.ffn_norm, dy);
        let dh = self.ffn.backward(p, g, &c.ffn, &dr2) + &dr2;
        let dr1 = self.attn_norm.backward(p, g, &c.attn_norm, &dh);
        let (dq, dkv) = self.attn.backward(p, g, &c.attn, &dr1);
        dr1 + dq + dkv
    }
}

/// Bidirectional encoder: every position attends to every non-padding key.
#[derive(Debug, Clone)]
pub struct EncoderStack {
    pub embeddings: Embeddings,
    layers: Vec<EncoderLayer>,
}

#[derive(Debug, Clone)]
pub struct EncoderCache {
    embeddings: EmbeddingCache,
    layers: Vec<EncoderLayerCache>,
}

impl EncoderStack {
    pub fn new(pb: &mut ParamBuilder<'_>, name: &str, dims: &StackDims) -> Self {
        let embeddings = Embeddings::new(pb, &format!("{name}.embeddings"), dims);
        let layers = (0..dims.num_layers)
            .map(|i| EncoderLayer::new(pb, &format!("{name}.layer{i}"), dims))
            .collect();
        EncoderStack { embeddings, layers }
    }

    pub fn forward(&self, p: &ParamSet, ids: &[u32], mask: &AttnMask) -> (Array2<f64>, EncoderCache) {
        let (mut x, embeddings) = self.embeddings.forward(p, ids);
        let mut layers = Vec::with_capacity(self.layers.len());
        for layer in &self.layers {
            let (y, c) = layer.forward(p, &x, mask);
            layers.push(c);
            x = y;
        }
        (x, EncoderCache { embeddings, layers })
    }

    pub fn backward(&self, p: &ParamSet, g: &mut ParamSet, cache: &EncoderCache, dy: Array2<f64>) {
        let mut d = dy;
        for (layer, c) in self.layers.iter().zip(&cache.layers).rev() {
            d = layer.backward(p, g, c, &d);
        }
        self.embeddings.backward(p, g, &cache.embeddings, &d);
    }
}

#[derive(Debug, Clone)]
pub struct DecoderLayer {
    self_attn: MultiHeadAttention,
    self_norm: LayerNorm,
    cross_attn: MultiHeadAttention,
    cross_norm: LayerNorm,
    ffn: FeedForward,
    ffn_norm: LayerNorm,
}

#[derive(Debug, Clone)]
struct DecoderLayerCache {
    self_attn: AttentionCache,
    self_norm: LayerNormCache,
    cross_attn: AttentionCache,
    cross_norm: LayerNormCache,
    ffn: FeedForwardCache,
    ffn_norm: LayerNormCache,
}

impl DecoderLayer {
    fn new(pb: &mut ParamBuilder<'_>, name: &str, dims: &StackDims) -> Self {
        let (d, h, std) = (dims.d_model, dims.num_heads, dims.init_std);
        DecoderLayer {
            self_attn: MultiHeadAttention::new(pb, &format!("{name}.self_attention"), d, h, std),
            self_norm: LayerNorm::new(pb, &format!("{name}.self_attention_norm"), d),
            cross_attn: MultiHeadAttention::new(pb, &format!("{name}.cross_attention"), d, h, std),
            cross_norm: LayerNorm::new(pb, &format!("{name}.cross_attention_norm"), d),
            ffn: FeedForward::new(pb, &format!("{name}.ffn"), d, dims.d_ff, std),
            ffn_norm: LayerNorm::new(pb, &format!("{name}.ffn_norm"), d),
        }
    }

    fn forward(
        &self,
        p: &ParamSet,
        x: &Array2<f64>,
        memory: &Array2<f64>,
        memory_mask: &AttnMask,
    ) -> (Array2<f64>, DecoderLayerCache) {
        let causal = AttnMask {
            causal: true,
            key_valid: None,
        };
        let (a, self_attn) = self.self_attn.forward(p, x, x, &causal);
        let (h1, self_norm) = self.self_norm.forward(p, &(x + &a));
        let (c, cross_attn) = self.cross_attn.forward(p, &h1, memory, memory_mask);
        let (h2, cross_norm) = self.cross_norm.forward(p, &(&h1 + &c));
        let (f, ffn) = self.ffn.forward(p, &h2);
        let (out, ffn_norm) = self.ffn_norm.forward(p, &(&h2 + &f));
        (
            out,
            DecoderLayerCache {
                self_attn,
                self_norm,
                cross_attn,
                cross_norm,
                ffn,
                ffn_norm,
            },
        )
    }

    /// Returns `(dL/dx, dL/dmemory)`.
    fn backward(
        &self,
        p: &ParamSet,
        g: &mut ParamSet,
        c: &DecoderLayerCache,
        dy: &Array2<f64>,
    ) -> (Array2<f64>, Array2<f64>) {
        let dr3 = self.ffn_norm.backward(p, g, &c.ffn_norm, dy);
        let dh2 = self.ffn.backward(p, g, &c.ffn, &dr3) + &dr3;
        let dr2 = self.cross_norm.backward(p, g, &c.cross_norm, &dh2);
        let (dq, dmem) = self.cross_attn.backward(p, g, &c.cross_attn, &dr2);
        let dh1 = dr2 + dq;
        let dr1 = self.self_norm.backward(p, g, &c.self_norm, &dh1);
        let (dq, dkv) = self.self_attn.backward(p, g, &c.self_attn, &dr1);
        (dr1 + dq + dkv, dmem)
    }
}

/// Causal decoder with cross-attention to an encoder memory at every layer.
#[derive(Debug, Clone)]
pub struct DecoderStack {
    pub embeddings: Embeddings,
    layers: Vec<DecoderLayer>,
}

#[derive(Debug, Clone)]
pub struct DecoderCache {
    embeddings: EmbeddingCache,
    layers: Vec<DecoderLayerCache>,
}

impl DecoderStack {
    pub fn new(pb: &mut ParamBuilder<'_>, name: &str, dims: &StackDims) -> Self {
        let embeddings = Embeddings::new(pb, &format!("{name}.embeddings"), dims);
        let layers = (0..dims.num_layers)
            .map(|i| DecoderLayer::new(pb, &format!("{name}.layer{i}"), dims))
            .collect();
        DecoderStack { embeddings, layers }
    }

    pub fn forward(
        &self,
        p: &ParamSet,
        ids: &[u32],
        memory: &Array2<f64>,
        memory_mask: &AttnMask,
    ) -> (Array2<f64>, DecoderCache) {
        let (mut x, embeddings) = self.embeddings.forward(p, ids);
        let mut layers = Vec::with_capacity(self.layers.len());
        for layer in &self.layers {
            let (y, c) = layer.forward(p, &x, memory, memory_mask);
            layers.push(c);
            x = y;
        }
        (x, DecoderCache { embeddings, layers })
    }

    /// Returns the gradient with respect to the encoder memory.
    pub fn backward(&self, p: &ParamSet, g: &mut ParamSet, cache: &DecoderCache, dy: Array2<f64>) -> Array2<f64> {
        let mut d = dy;
        let mut dmem: Option<Array2<f64>> = None;
        for (layer, c) in self.layers.iter().zip(&cache.layers).rev() {
            let (dx, dm) = layer.backward(p, g, c, &d);
            d = dx;
            dmem = Some(match dmem {
                Some(acc) => acc + dm,
                None => dm,
            });
        }
        self.embeddings.backward(p, g, &cache.embeddings, &d);
        dmem.expect("decoder has at least one layer")
    }
}
