//! Network: pointwise stem, inverted-residual 1-D blocks over time,
//! multi-head self-attention, attention pooling and a sigmoid head.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::config::ClassifierConfig;
use crate::nn::{glorot, Grads, Matrix, ParamId, ParamSet, Tape, Var};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct Block {
    expand_w: ParamId,
    expand_b: ParamId,
    dw_kernel: ParamId,
    dw_b: ParamId,
    project_w: ParamId,
    project_b: ParamId,
}

/// Parameter layout; weights themselves live in a [`ParamSet`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Network {
    n_mels: usize,
    width: usize,
    heads: usize,
    stem_w: ParamId,
    stem_b: ParamId,
    blocks: Vec<Block>,
    wq: ParamId,
    wk: ParamId,
    wv: ParamId,
    wo: ParamId,
    pool_w: ParamId,
    head_w: ParamId,
    head_b: ParamId,
}

const KERNEL: usize = 3;

impl Network {
    pub fn new<R: Rng>(cfg: &ClassifierConfig, n_mels: usize, rng: &mut R) -> (Network, ParamSet) {
        let mut p = ParamSet::default();
        let c = cfg.backbone_width;
        let e = c * cfg.expansion;
        let stem_w = p.add("stem.w", glorot(rng, n_mels, c));
        let stem_b = p.add("stem.b", Matrix::zeros(1, c));
        let blocks = (0..cfg.num_conv_blocks)
            .map(|i| Block {
                expand_w: p.add(format!("block{i}.expand.w"), glorot(rng, c, e)),
                expand_b: p.add(format!("block{i}.expand.b"), Matrix::zeros(1, e)),
                dw_kernel: p.add(format!("block{i}.dw.k"), glorot(rng, KERNEL, e)),
                dw_b: p.add(format!("block{i}.dw.b"), Matrix::zeros(1, e)),
                project_w: p.add(format!("block{i}.project.w"), glorot(rng, e, c)),
                project_b: p.add(format!("block{i}.project.b"), Matrix::zeros(1, c)),
            })
            .collect();
        let net = Network {
            n_mels,
            width: c,
            heads: cfg.attention_heads,
            stem_w,
            stem_b,
            blocks,
            wq: p.add("attn.q", glorot(rng, c, c)),
            wk: p.add("attn.k", glorot(rng, c, c)),
            wv: p.add("attn.v", glorot(rng, c, c)),
            wo: p.add("attn.o", glorot(rng, c, c)),
            pool_w: p.add("pool.w", glorot(rng, c, 1)),
            head_w: p.add("head.w", glorot(rng, c, cfg.num_classes)),
            head_b: p.add("head.b", Matrix::zeros(1, cfg.num_classes)),
        };
        (net, p)
    }

    pub fn n_mels(&self) -> usize {
        self.n_mels
    }

    fn dense(&self, t: &mut Tape, x: Var, w: ParamId, b: ParamId) -> Var {
        let w = t.param(w);
        let b = t.param(b);
        let y = t.matmul(x, w);
        t.add_row(y, b)
    }

    /// Logits `[1, classes]` for one normalised window `[frames, n_mels]`.
    pub fn forward(&self, t: &mut Tape, x: &Matrix) -> Var {
        assert_eq!(x.cols, self.n_mels, "feature width");
        let x = t.constant(x.clone());
        let s = self.dense(t, x, self.stem_w, self.stem_b);
        let mut h = t.silu(s);
        for b in &self.blocks {
            let frames = t.value(h).rows;
            // Downsample while the sequence stays long enough for attention.
            let stride = if frames >= 16 { 2 } else { 1 };
            let e = self.dense(t, h, b.expand_w, b.expand_b);
            let e = t.silu(e);
            let k = t.param(b.dw_kernel);
            let d = t.depthwise_conv(e, k, stride, KERNEL / 2);
            let db = t.param(b.dw_b);
            let d = t.add_row(d, db);
            let d = t.silu(d);
            let out = self.dense(t, d, b.project_w, b.project_b);
            h = if stride == 1 { t.add(h, out) } else { out };
        }
        let h = self.attention(t, h);
        // Attention pooling over time.
        let pw = t.param(self.pool_w);
        let a = t.matmul(h, pw);
        let a = t.transpose(a);
        let a = t.softmax_rows(a);
        let pooled = t.matmul(a, h);
        self.dense(t, pooled, self.head_w, self.head_b)
    }

    fn attention(&self, t: &mut Tape, h: Var) -> Var {
        let dh = self.width / self.heads;
        let (wq, wk, wv, wo) = (t.param(self.wq), t.param(self.wk), t.param(self.wv), t.param(self.wo));
        let q = t.matmul(h, wq);
        let k = t.matmul(h, wk);
        let v = t.matmul(h, wv);
        let scale = 1.0 / (dh as f64).sqrt();
        let mut outs = Vec::with_capacity(self.heads);
        for i in 0..self.heads {
            let qi = t.slice_cols(q, i * dh, dh);
            let ki = t.slice_cols(k, i * dh, dh);
            let vi = t.slice_cols(v, i * dh, dh);
            let kt = t.transpose(ki);
            let s = t.matmul(qi, kt);
            let s = t.affine(s, scale, 0.0);
            let a = t.softmax_rows(s);
            outs.push(t.matmul(a, vi));
        }
        let cat = if outs.len() == 1 { outs[0] } else { t.concat_cols(&outs) };
        let o = t.matmul(cat, wo);
        t.add(h, o)
    }

    /// Summed per-class binary cross-entropy of one window.
    pub fn loss(&self, params: &ParamSet, x: &Matrix, target: &Matrix) -> f64 {
        let mut t = Tape::new(params);
        let logits = self.forward(&mut t, x);
        let l = t.bce_with_logits(logits, target);
        t.value(l).data[0]
    }

    pub fn loss_and_grads(&self, params: &ParamSet, x: &Matrix, target: &Matrix) -> (f64, Grads) {
        let mut t = Tape::new(params);
        let logits = self.forward(&mut t, x);
        let l = t.bce_with_logits(logits, target);
        (t.value(l).data[0], t.backward(l))
    }

    /// Sigmoid scores of one window.
    pub fn scores(&self, params: &ParamSet, x: &Matrix) -> Vec<f64> {
        let mut t = Tape::new(params);
        let logits = self.forward(&mut t, x);
        t.value(logits).data.iter().map(|z| crate::nn::sigmoid(*z)).collect()
    }
}
