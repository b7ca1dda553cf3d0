use ndarray::{s, Array1, Array2, Axis};

use super::{Init, ParamBuilder, ParamSet};

/// `y = x W^T + b` with `W` stored as `(out, in)`.
#[derive(Debug, Clone)]
pub struct Linear {
    pub w: usize,
    pub b: usize,
}

impl Linear {
    pub fn new(pb: &mut ParamBuilder<'_>, name: &str, in_dim: usize, out_dim: usize, std: f64) -> Self {
        let w = pb.add(&format!("{name}.weight"), &[out_dim, in_dim], Init::Normal(std));
        let b = pb.add(&format!("{name}.bias"), &[out_dim], Init::Zeros);
        Linear { w, b }
    }

    pub fn forward(&self, p: &ParamSet, x: &Array2<f64>) -> Array2<f64> {
        x.dot(&p.mat(self.w).t()) + p.vec(self.b)
    }

    /// Accumulates parameter gradients into `g` and returns `dL/dx`.
    pub fn backward(&self, p: &ParamSet, g: &mut ParamSet, x: &Array2<f64>, dy: &Array2<f64>) -> Array2<f64> {
        g.mat_mut(self.w).scaled_add(1.0, &dy.t().dot(x));
        g.vec_mut(self.b).scaled_add(1.0, &dy.sum_axis(Axis(0)));
        dy.dot(&p.mat(self.w))
    }
}

const LN_EPS: f64 = 1e-5;

#[derive(Debug, Clone)]
pub struct LayerNorm {
    pub gamma: usize,
    pub beta: usize,
}

#[derive(Debug, Clone)]
pub struct LayerNormCache {
    xhat: Array2<f64>,
    inv_std: Array1<f64>,
}

impl LayerNorm {
    pub fn new(pb: &mut ParamBuilder<'_>, name: &str, dim: usize) -> Self {
        let gamma = pb.add(&format!("{name}.gamma"), &[dim], Init::Ones);
        let beta = pb.add(&format!("{name}.beta"), &[dim], Init::Zeros);
        LayerNorm { gamma, beta }
    }

    pub fn forward(&self, p: &ParamSet, x: &Array2<f64>) -> (Array2<f64>, LayerNormCache) {
        let d = x.ncols() as f64;
        let mut xhat = x.clone();
        let mut inv_std = Array1::zeros(x.nrows());
        for (mut row, inv) in xhat.rows_mut().into_iter().zip(inv_std.iter_mut()) {
            let mean = row.sum() / d;
            row.mapv_inplace(|v| v - mean);
            let var = row.iter().map(|v| v * v).sum::<f64>() / d;
            *inv = 1.0 / (var + LN_EPS).sqrt();
            let s = *inv;
            row.mapv_inplace(|v| v * s);
        }
        let y = &xhat * &p.vec(self.gamma) + p.vec(self.beta);
        (y, LayerNormCache { xhat, inv_std })
    }

    pub fn backward(&self, p: &ParamSet, g: &mut ParamSet, cache: &LayerNormCache, dy: &Array2<f64>) -> Array2<f64> {
        g.vec_mut(self.gamma)
            .scaled_add(1.0, &(dy * &cache.xhat).sum_axis(Axis(0)));
        g.vec_mut(self.beta).scaled_add(1.0, &dy.sum_axis(Axis(0)));
        let dxhat = dy * &p.vec(self.gamma);
        let d = dy.ncols() as f64;
        let mut dx = Array2::zeros(dy.raw_dim());
        for i in 0..dy.nrows() {
            let dh = dxhat.row(i);
            let xh = cache.xhat.row(i);
            let sum_dh = dh.sum();
            let sum_dh_xh = dh.dot(&xh);
            let inv = cache.inv_std[i];
            for j in 0..dy.ncols() {
                dx[[i, j]] = inv / d * (d * dh[j] - sum_dh - xh[j] * sum_dh_xh);
            }
        }
        dx
    }
}

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2 / pi)

/// Tanh approximation of GELU.
pub fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + (GELU_C * (x + 0.044715 * x * x * x)).tanh())
}

pub fn gelu_grad(x: f64) -> f64 {
    let t = (GELU_C * (x + 0.044715 * x * x * x)).tanh();
    0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * GELU_C * (1.0 + 3.0 * 0.044715 * x * x)
}

#[derive(Debug, Clone)]
pub struct FeedForward {
    pub up: Linear,
    pub down: Linear,
}

#[derive(Debug, Clone)]
pub struct FeedForwardCache {
    x: Array2<f64>,
    pre: Array2<f64>,
    act: Array2<f64>,
}

impl FeedForward {
    pub fn new(pb: &mut ParamBuilder<'_>, name: &str, d_model: usize, d_ff: usize, std: f64) -> Self {
        FeedForward {
            up: Linear::new(pb, &format!("{name}.up"), d_model, d_ff, std),
            down: Linear::new(pb, &format!("{name}.down"), d_ff, d_model, std),
        }
    }

    pub fn forward(&self, p: &ParamSet, x: &Array2<f64>) -> (Array2<f64>, FeedForwardCache) {
        let pre = self.up.forward(p, x);
        let act = pre.mapv(gelu);
        let y = self.down.forward(p, &act);
        (
            y,
            FeedForwardCache {
                x: x.clone(),
                pre,
                act,
            },
        )
    }

    pub fn backward(&self, p: &ParamSet, g: &mut ParamSet, cache: &FeedForwardCache, dy: &Array2<f64>) -> Array2<f64> {
        let dact = self.down.backward(p, g, &cache.act, dy);
        let dpre = dact * cache.pre.mapv(gelu_grad);
        self.up.backward(p, g, &cache.x, &dpre)
    }
}

/// Which query/key pairs may attend to each other.
#[derive(Debug, Clone, Default)]
pub struct AttnMask {
    /// Query `i` attends only to keys `j <= i`.
    pub causal: bool,
    /// `false` entries are excluded as keys (padding).
    pub key_valid: Option<Vec<bool>>,
}

impl AttnMask {
    fn allows(&self, i: usize, j: usize) -> bool {
        (!self.causal || j <= i) && self.key_valid.as_ref().is_none_or(|v| v[j])
    }
}

#[derive(Debug, Clone)]
pub struct MultiHeadAttention {
    pub q: Linear,
    pub k: Linear,
    pub v: Linear,
    pub o: Linear,
    pub heads: usize,
}

#[derive(Debug, Clone)]
pub struct AttentionCache {
    xq: Array2<f64>,
    xkv: Array2<f64>,
    q: Array2<f64>,
    k: Array2<f64>,
    v: Array2<f64>,
    probs: Vec<Array2<f64>>,
    ctx: Array2<f64>,
}

impl MultiHeadAttention {
    pub fn new(pb: &mut ParamBuilder<'_>, name: &str, d_model: usize, heads: usize, std: f64) -> Self {
        MultiHeadAttention {
            q: Linear::new(pb, &format!("{name}.query"), d_model, d_model, std),
            k: Linear::new(pb, &format!("{name}.key"), d_model, d_model, std),
            v: Linear::new(pb, &format!("{name}.value"), d_model, d_model, std),
            o: Linear::new(pb, &format!("{name}.output"), d_model, d_model, std),
            heads,
        }
    }

    pub fn forward(
        &self,
        p: &ParamSet,
        xq: &Array2<f64>,
        xkv: &Array2<f64>,
        mask: &AttnMask,
    ) -> (Array2<f64>, AttentionCache) {
        let q = self.q.forward(p, xq);
        let k = self.k.forward(p, xkv);
        let v = self.v.forward(p, xkv);
        let d = q.ncols();
        let dh = d / self.heads;
        let scale = 1.0 / (dh as f64).sqrt();
        let mut ctx = Array2::zeros((xq.nrows(), d));
        let mut probs = Vec::with_capacity(self.heads);
        for h in 0..self.heads {
            let cols = s![.., h * dh..(h + 1) * dh];
            let qh = q.slice(cols);
            let kh = k.slice(cols);
            let vh = v.slice(cols);
            let mut scores = qh.dot(&kh.t()) * scale;
            for (i, mut row) in scores.rows_mut().into_iter().enumerate() {
                let mut max = f64::NEG_INFINITY;
                for (j, x) in row.iter().enumerate() {
                    if mask.allows(i, j) {
                        max = max.max(*x);
                    }
                }
                let mut sum = 0.0;
                for (j, x) in row.iter_mut().enumerate() {
                    *x = if mask.allows(i, j) { (*x - max).exp() } else { 0.0 };
                    sum += *x;
                }
                row.mapv_inplace(|x| x / sum);
            }
            ctx.slice_mut(cols).assign(&scores.dot(&vh));
            probs.push(scores);
        }
        let out = self.o.forward(p, &ctx);
        (
            out,
            AttentionCache {
                xq: xq.clone(),
                xkv: xkv.clone(),
                q,
                k,
                v,
                probs,
                ctx,
            },
        )
    }

    /// Returns `(dL/dxq, dL/dxkv)`.
    pub fn backward(
        &self,
        p: &ParamSet,
        g: &mut ParamSet,
        cache: &AttentionCache,
        dy: &Array2<f64>,
    ) -> (Array2<f64>, Array2<f64>) {
        let dctx = self.o.backward(p, g, &cache.ctx, dy);
        let d = cache.q.ncols();
        let dh = d / self.heads;
        let scale = 1.0 / (dh as f64).sqrt();
        let mut dq = Array2::zeros(cache.q.raw_dim());
        let mut dk = Array2::zeros(cache.k.raw_dim());
        let mut dv = Array2::zeros(cache.v.raw_dim());
        for h in 0..self.heads {
            let cols = s![.., h * dh..(h + 1) * dh];
            let probs = &cache.probs[h];
            let dctx_h = dctx.slice(cols);
            dv.slice_mut(cols).assign(&probs.t().dot(&dctx_h));
            let dprobs = dctx_h.dot(&cache.v.slice(cols).t());
            let mut dscores = Array2::zeros(probs.raw_dim());
            for i in 0..probs.nrows() {
                let pr = probs.row(i);
                let dp = dprobs.row(i);
                let inner = pr.dot(&dp);
                for j in 0..probs.ncols() {
                    dscores[[i, j]] = pr[j] * (dp[j] - inner) * scale;
                }
            }
            dq.slice_mut(cols).assign(&dscores.dot(&cache.k.slice(cols)));
            dk.slice_mut(cols).assign(&dscores.t().dot(&cache.q.slice(cols)));
        }
        let dxq = self.q.backward(p, g, &cache.xq, &dq);
        let dxkv = self.k.backward(p, g, &cache.xkv, &dk) + self.v.backward(p, g, &cache.xkv, &dv);
        (dxq, dxkv)
    }
}
