//! Tiered sample-level autoregressive model over 8-bit mu-law symbols.
//!
//! The top tier runs a GRU over non-overlapping frames of `frame_top`
//! samples, the middle tier a GRU over frames of `frame_mid` samples
//! conditioned on the top tier, and the sample tier an MLP over the
//! embeddings of the previous `context` symbols conditioned on the middle
//! tier.

use rand::distr::{weighted::WeightedIndex, Distribution};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::mulaw::{decode_sample, mu_law_encode, LEVELS};
#[cfg(test)]
use super::mulaw::mu_law_decode;
use super::{checked_source, generation_error, GeneratedSample, GenerationRequest, Generator, GeneratorProfile, Provenance};
use crate::corpus::AudioBuffer;
use crate::error::{Error, Result};
use crate::nn::{glorot, uniform, Adam, Grads, Matrix, ParamId, ParamSet, Tape, Var};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TieredConfig {
    pub sample_rate_hz: u32,
    pub frame_top: usize,
    pub frame_mid: usize,
    /// Previous symbols seen by the sample tier.
    pub context: usize,
    pub embed_dim: usize,
    pub top_hidden: usize,
    pub mid_hidden: usize,
    pub sample_hidden: usize,
    /// Predicted samples per training chunk.
    pub seq_len: usize,
    pub learning_rate: f64,
    pub steps: usize,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for TieredConfig {
    fn default() -> Self {
        TieredConfig {
            sample_rate_hz: 16_000,
            frame_top: 64,
            frame_mid: 16,
            context: 4,
            embed_dim: 16,
            top_hidden: 64,
            mid_hidden: 64,
            sample_hidden: 64,
            seq_len: 512,
            learning_rate: 3e-3,
            steps: 300,
            batch_size: 4,
            seed: 0,
        }
    }
}

impl TieredConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if self.frame_mid == 0 || self.frame_top % self.frame_mid != 0 {
            return bad("frame_top must be a positive multiple of frame_mid");
        }
        if self.seq_len == 0 || self.seq_len % self.frame_top != 0 {
            return bad("seq_len must be a positive multiple of frame_top");
        }
        if self.context == 0 || self.context > self.frame_top {
            return bad("context must lie in [1, frame_top]");
        }
        if self.embed_dim == 0 || self.top_hidden == 0 || self.mid_hidden == 0 || self.sample_hidden == 0 {
            return bad("layer sizes must be positive");
        }
        if self.steps == 0 || self.batch_size == 0 {
            return bad("steps and batch_size must be positive");
        }
        Ok(())
    }

    fn ratio(&self) -> usize {
        self.frame_top / self.frame_mid
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct Gru {
    wx: ParamId,
    bx: ParamId,
    wh: ParamId,
    bh: ParamId,
    hidden: usize,
}

impl Gru {
    fn new(p: &mut ParamSet, rng: &mut ChaCha8Rng, name: &str, input: usize, hidden: usize) -> Self {
        Gru {
            wx: p.add(format!("{name}.wx"), glorot(rng, input, 3 * hidden)),
            bx: p.add(format!("{name}.bx"), Matrix::zeros(1, 3 * hidden)),
            wh: p.add(format!("{name}.wh"), glorot(rng, hidden, 3 * hidden)),
            bh: p.add(format!("{name}.bh"), Matrix::zeros(1, 3 * hidden)),
            hidden,
        }
    }

    /// One step on the tape; `a` is the input projection `[1, 3H]`.
    fn step(&self, t: &mut Tape, a: Var, h: Var) -> Var {
        let hd = self.hidden;
        let (wh, bh) = (t.param(self.wh), t.param(self.bh));
        let hw = t.matmul(h, wh);
        let hw = t.add(hw, bh);
        let (ar, au, an) = (t.slice_cols(a, 0, hd), t.slice_cols(a, hd, hd), t.slice_cols(a, 2 * hd, hd));
        let (hr, hu, hn) = (t.slice_cols(hw, 0, hd), t.slice_cols(hw, hd, hd), t.slice_cols(hw, 2 * hd, hd));
        let r = t.add(ar, hr);
        let r = t.sigmoid(r);
        let u = t.add(au, hu);
        let u = t.sigmoid(u);
        let rn = t.mul(r, hn);
        let n = t.add(an, rn);
        let n = t.tanh(n);
        let d = t.sub(h, n);
        let ud = t.mul(u, d);
        t.add(n, ud)
    }

    /// The same step on plain arrays.
    fn step_plain(&self, p: &ParamSet, a: &[f64], h: &mut [f64]) {
        let hd = self.hidden;
        let mut hw = p.get(self.bh).data.clone();
        vecmat_acc(h, p.get(self.wh), &mut hw);
        for i in 0..hd {
            let r = crate::nn::sigmoid(a[i] + hw[i]);
            let u = crate::nn::sigmoid(a[hd + i] + hw[hd + i]);
            let n = (a[2 * hd + i] + r * hw[2 * hd + i]).tanh();
            h[i] = n + u * (h[i] - n);
        }
    }
}

/// `out += x W`.
fn vecmat_acc(x: &[f64], w: &Matrix, out: &mut [f64]) {
    for (i, xi) in x.iter().enumerate() {
        if *xi != 0.0 {
            for (o, wv) in out.iter_mut().zip(w.row(i)) {
                *o += xi * wv;
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct Layout {
    top: Gru,
    top_out_w: ParamId,
    top_out_b: ParamId,
    mid: Gru,
    mid_out_w: ParamId,
    mid_out_b: ParamId,
    embed: ParamId,
    s1_w: ParamId,
    s1_b: ParamId,
    s2_w: ParamId,
    s2_b: ParamId,
    s3_w: ParamId,
    s3_b: ParamId,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TieredModel {
    pub config: TieredConfig,
    layout: Layout,
    pub params: ParamSet,
    /// Mean cross-entropy per training step.
    pub history: Vec<f64>,
}

fn symbol_value(q: u8) -> f64 {
    decode_sample(q)
}

impl TieredModel {
    fn init(cfg: &TieredConfig, rng: &mut ChaCha8Rng) -> Self {
        let mut p = ParamSet::default();
        let r = cfg.ratio();
        let mid_in = 3 * cfg.mid_hidden;
        let top = Gru::new(&mut p, rng, "top", cfg.frame_top, cfg.top_hidden);
        let top_out_w = p.add("top.out.w", glorot(rng, cfg.top_hidden, r * mid_in));
        let top_out_b = p.add("top.out.b", Matrix::zeros(1, r * mid_in));
        let mid = Gru::new(&mut p, rng, "mid", cfg.frame_mid, cfg.mid_hidden);
        let mid_out_w = p.add("mid.out.w", glorot(rng, cfg.mid_hidden, cfg.frame_mid * cfg.sample_hidden));
        let mid_out_b = p.add("mid.out.b", Matrix::zeros(1, cfg.frame_mid * cfg.sample_hidden));
        let embed = p.add("sample.embed", uniform(rng, LEVELS, cfg.embed_dim, 0.5));
        let s1_w = p.add("sample.l1.w", glorot(rng, cfg.context * cfg.embed_dim, cfg.sample_hidden));
        let s1_b = p.add("sample.l1.b", Matrix::zeros(1, cfg.sample_hidden));
        let s2_w = p.add("sample.l2.w", glorot(rng, cfg.sample_hidden, cfg.sample_hidden));
        let s2_b = p.add("sample.l2.b", Matrix::zeros(1, cfg.sample_hidden));
        let s3_w = p.add("sample.out.w", glorot(rng, cfg.sample_hidden, LEVELS));
        let s3_b = p.add("sample.out.b", Matrix::zeros(1, LEVELS));
        TieredModel {
            config: cfg.clone(),
            layout: Layout {
                top,
                top_out_w,
                top_out_b,
                mid,
                mid_out_w,
                mid_out_b,
                embed,
                s1_w,
                s1_b,
                s2_w,
                s2_b,
                s3_w,
                s3_b,
            },
            params: p,
            history: Vec::new(),
        }
    }

    /// Logits `[seq, 256]` for positions `frame_top..frame_top+seq` of a
    /// chunk of `frame_top + seq` symbols.
    fn forward(&self, t: &mut Tape, chunk: &[u8]) -> Var {
        let cfg = &self.config;
        let l = &self.layout;
        let (ft, fm) = (cfg.frame_top, cfg.frame_mid);
        let seq = chunk.len() - ft;
        let values: Vec<f64> = chunk.iter().map(|q| symbol_value(*q)).collect();
        let n_top = seq / ft;
        let n_mid = seq / fm;
        let mid_in = 3 * cfg.mid_hidden;

        // Top tier.
        let xt = t.constant(Matrix::from_vec(n_top, ft, values[..n_top * ft].to_vec()));
        let (wx, bx) = (t.param(l.top.wx), t.param(l.top.bx));
        let at = t.matmul(xt, wx);
        let at = t.add_row(at, bx);
        let mut h = t.constant(Matrix::zeros(1, cfg.top_hidden));
        let mut tops = Vec::with_capacity(n_top);
        for j in 0..n_top {
            let a = t.slice_rows(at, j, 1);
            h = l.top.step(t, a, h);
            tops.push(h);
        }
        let ht = t.concat_rows(&tops);
        let (ow, ob) = (t.param(l.top_out_w), t.param(l.top_out_b));
        let ct = t.matmul(ht, ow);
        let ct = t.add_row(ct, ob);
        let ct = t.reshape(ct, n_mid, mid_in);

        // Middle tier: inputs are the previous frame_mid samples.
        let xm = t.constant(Matrix::from_vec(n_mid, fm, values[ft - fm..ft - fm + n_mid * fm].to_vec()));
        let (wx, bx) = (t.param(l.mid.wx), t.param(l.mid.bx));
        let am = t.matmul(xm, wx);
        let am = t.add_row(am, bx);
        let am = t.add(am, ct);
        let mut h = t.constant(Matrix::zeros(1, cfg.mid_hidden));
        let mut mids = Vec::with_capacity(n_mid);
        for m in 0..n_mid {
            let a = t.slice_rows(am, m, 1);
            h = l.mid.step(t, a, h);
            mids.push(h);
        }
        let hm = t.concat_rows(&mids);
        let (ow, ob) = (t.param(l.mid_out_w), t.param(l.mid_out_b));
        let cm = t.matmul(hm, ow);
        let cm = t.add_row(cm, ob);
        let cm = t.reshape(cm, seq, cfg.sample_hidden);

        // Sample tier.
        let idx: Vec<usize> = (0..seq)
            .flat_map(|p| (ft + p - cfg.context..ft + p).map(|i| chunk[i] as usize))
            .collect();
        let emb = t.param(l.embed);
        let e = t.gather(emb, &idx);
        let e = t.reshape(e, seq, cfg.context * cfg.embed_dim);
        let (w1, b1) = (t.param(l.s1_w), t.param(l.s1_b));
        let h1 = t.matmul(e, w1);
        let h1 = t.add(h1, cm);
        let h1 = t.add_row(h1, b1);
        let h1 = t.silu(h1);
        let (w2, b2) = (t.param(l.s2_w), t.param(l.s2_b));
        let h2 = t.matmul(h1, w2);
        let h2 = t.add_row(h2, b2);
        let h2 = t.silu(h2);
        let (w3, b3) = (t.param(l.s3_w), t.param(l.s3_b));
        let o = t.matmul(h2, w3);
        t.add_row(o, b3)
    }

    fn chunk_loss(&self, chunk: &[u8]) -> (f64, Grads) {
        let mut t = Tape::new(&self.params);
        let logits = self.forward(&mut t, chunk);
        let targets: Vec<usize> = chunk[self.config.frame_top..].iter().map(|q| *q as usize).collect();
        let loss = t.cross_entropy(logits, &targets);
        (t.value(loss).data[0], t.backward(loss))
    }

    /// Teacher-forced mean cross-entropy (nats) and next-symbol accuracy over
    /// consecutive chunks of `audio`.
    pub fn evaluate(&self, audio: &AudioBuffer) -> Result<(f64, f64)> {
        let q = mu_law_encode(&audio.samples)?;
        let ft = self.config.frame_top;
        let span = ft + self.config.seq_len;
        if q.len() < span {
            return Err(Error::invalid(format!("need at least {span} samples to evaluate")));
        }
        let starts: Vec<usize> = (0..=(q.len() - span)).step_by(self.config.seq_len).collect();
        let parts = crate::exec::map_slice(&starts, |&s| {
            let chunk = &q[s..s + span];
            let mut t = Tape::new(&self.params);
            let logits = self.forward(&mut t, chunk);
            let lv = t.value(logits);
            let mut ce = 0.0;
            let mut hits = 0usize;
            for (r, &target) in chunk[ft..].iter().enumerate() {
                let row = lv.row(r);
                let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let lse = max + row.iter().map(|x| (x - max).exp()).sum::<f64>().ln();
                ce += lse - row[target as usize];
                if argmax(row) == target as usize {
                    hits += 1;
                }
            }
            (ce, hits)
        });
        let n = (starts.len() * self.config.seq_len) as f64;
        let ce = parts.iter().map(|p| p.0).sum::<f64>() / n;
        let acc = parts.iter().map(|p| p.1).sum::<usize>() as f64 / n;
        Ok((ce, acc))
    }
}

fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in row.iter().enumerate() {
        if *v > row[best] {
            best = i;
        }
    }
    best
}

pub fn tiered_train(train_set: &[AudioBuffer], cfg: &TieredConfig) -> Result<TieredModel> {
    cfg.validate()?;
    let span = cfg.frame_top + cfg.seq_len;
    let mut tracks = Vec::new();
    for a in train_set {
        if a.sample_rate_hz != cfg.sample_rate_hz {
            return Err(Error::invalid(format!(
                "training audio at {} Hz, model rate {} Hz",
                a.sample_rate_hz, cfg.sample_rate_hz
            )));
        }
        if a.len() >= span {
            tracks.push(mu_law_encode(&a.samples)?);
        }
    }
    if tracks.is_empty() {
        return Err(Error::invalid(format!("no training audio with at least {span} samples")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut model = TieredModel::init(cfg, &mut rng);
    let mut adam = Adam::new(&model.params, cfg.learning_rate).with_clip(5.0);
    for step in 0..cfg.steps {
        let chunks: Vec<&[u8]> = (0..cfg.batch_size)
            .map(|_| {
                let tr = &tracks[rng.random_range(0..tracks.len())];
                let s = rng.random_range(0..=tr.len() - span);
                &tr[s..s + span]
            })
            .collect();
        let parts = crate::exec::map_slice(&chunks, |c| model.chunk_loss(c));
        let loss = parts.iter().map(|p| p.0).sum::<f64>() / chunks.len() as f64;
        if !loss.is_finite() {
            return Err(Error::Diverged { epoch: step });
        }
        let mut g = Grads::sum_ordered(parts.into_iter().map(|p| p.1).collect()).expect("non-empty batch");
        g.scale(1.0 / chunks.len() as f64);
        adam.step(&mut model.params, &g);
        model.history.push(loss);
    }
    Ok(model)
}

/// Stateful plain-array inference.
struct Stepper<'m> {
    m: &'m TieredModel,
    top_h: Vec<f64>,
    mid_h: Vec<f64>,
    top_cond: Vec<f64>,
    mid_cond: Vec<f64>,
}

impl<'m> Stepper<'m> {
    fn new(m: &'m TieredModel) -> Self {
        let c = &m.config;
        Stepper {
            m,
            top_h: vec![0.0; c.top_hidden],
            mid_h: vec![0.0; c.mid_hidden],
            top_cond: Vec::new(),
            mid_cond: Vec::new(),
        }
    }

    /// Advances the frame tiers so position `p` can be predicted from `s`.
    fn advance(&mut self, s: &[u8], p: usize) {
        let c = &self.m.config;
        let l = &self.m.layout;
        let params = &self.m.params;
        let (ft, fm) = (c.frame_top, c.frame_mid);
        if p % ft == 0 {
            let x: Vec<f64> = s[p - ft..p].iter().map(|q| symbol_value(*q)).collect();
            let mut a = params.get(l.top.bx).data.clone();
            vecmat_acc(&x, params.get(l.top.wx), &mut a);
            l.top.step_plain(params, &a, &mut self.top_h);
            self.top_cond = params.get(l.top_out_b).data.clone();
            vecmat_acc(&self.top_h, params.get(l.top_out_w), &mut self.top_cond);
        }
        if p % fm == 0 {
            let mid_in = 3 * c.mid_hidden;
            let k = (p % ft) / fm;
            let x: Vec<f64> = s[p - fm..p].iter().map(|q| symbol_value(*q)).collect();
            let mut a = params.get(l.mid.bx).data.clone();
            vecmat_acc(&x, params.get(l.mid.wx), &mut a);
            for (ai, ci) in a.iter_mut().zip(&self.top_cond[k * mid_in..(k + 1) * mid_in]) {
                *ai += ci;
            }
            l.mid.step_plain(params, &a, &mut self.mid_h);
            self.mid_cond = params.get(l.mid_out_b).data.clone();
            vecmat_acc(&self.mid_h, params.get(l.mid_out_w), &mut self.mid_cond);
        }
    }

    fn logits(&self, s: &[u8], p: usize) -> Vec<f64> {
        let c = &self.m.config;
        let l = &self.m.layout;
        let params = &self.m.params;
        let hs = c.sample_hidden;
        let k = p % c.frame_mid;
        let mut h1: Vec<f64> = params.get(l.s1_b).data.iter().zip(&self.mid_cond[k * hs..(k + 1) * hs]).map(|(a, b)| a + b).collect();
        let emb = params.get(l.embed);
        let w1 = params.get(l.s1_w);
        for (j, &q) in s[p - c.context..p].iter().enumerate() {
            let e = emb.row(q as usize);
            for (d, ev) in e.iter().enumerate() {
                for (o, wv) in h1.iter_mut().zip(w1.row(j * c.embed_dim + d)) {
                    *o += ev * wv;
                }
            }
        }
        h1.iter_mut().for_each(|v| *v *= crate::nn::sigmoid(*v));
        let mut h2 = params.get(l.s2_b).data.clone();
        vecmat_acc(&h1, params.get(l.s2_w), &mut h2);
        h2.iter_mut().for_each(|v| *v *= crate::nn::sigmoid(*v));
        let mut o = params.get(l.s3_b).data.clone();
        vecmat_acc(&h2, params.get(l.s3_w), &mut o);
        o
    }
}

fn sample_symbol(logits: &[f64], temperature: f64, rng: &mut ChaCha8Rng) -> u8 {
    if temperature <= 1e-6 {
        return argmax(logits) as u8;
    }
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let w: Vec<f64> = logits.iter().map(|z| ((z - max) / temperature).exp()).collect();
    WeightedIndex::new(&w).map(|d| d.sample(rng) as u8).unwrap_or(argmax(logits) as u8)
}

/// Teacher-forces the prime, then samples up to `total_len` symbols.
/// Output starts with the mu-law round trip of the prime.
pub fn tiered_continue(
    model: &TieredModel,
    prime: &AudioBuffer,
    total_length_s: f64,
    temperature: f64,
    seed: u64,
) -> Result<AudioBuffer> {
    let cfg = &model.config;
    if prime.sample_rate_hz != cfg.sample_rate_hz {
        return Err(Error::invalid(format!(
            "prime at {} Hz, model at {} Hz",
            prime.sample_rate_hz, cfg.sample_rate_hz
        )));
    }
    if prime.len() < cfg.frame_top {
        return Err(Error::invalid(format!("prime needs at least {} samples", cfg.frame_top)));
    }
    let total = (total_length_s * cfg.sample_rate_hz as f64).round() as usize;
    if total < prime.len() {
        return Err(Error::invalid("total length shorter than the prime"));
    }
    let clipped: Vec<f32> = prime.samples.iter().map(|v| v.clamp(-1.0, 1.0)).collect();
    let mut s = mu_law_encode(&clipped)?;
    s.reserve(total - s.len());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut st = Stepper::new(model);
    let first = cfg.frame_top;
    for p in first..total {
        st.advance(&s, p);
        if p >= prime.len() {
            let logits = st.logits(&s, p);
            let q = sample_symbol(&logits, temperature, &mut rng);
            s.push(q);
        }
    }
    Ok(AudioBuffer::new(s.iter().map(|q| decode_sample(*q) as f32).collect(), cfg.sample_rate_hz))
}

/// Primed-mode generator.
pub struct TieredGenerator {
    pub model: TieredModel,
    pub profile: GeneratorProfile,
    pub temperature: f64,
}

impl Generator for TieredGenerator {
    fn profile(&self) -> &GeneratorProfile {
        &self.profile
    }

    fn generate(&self, request: &GenerationRequest) -> Result<GeneratedSample> {
        let prime = checked_source(&self.profile, request)?;
        let audio = tiered_continue(&self.model, prime, self.profile.sample_length_s, self.temperature, request.seed)
            .map_err(|e| generation_error(&self.profile, request, e.to_string()))?;
        Ok(GeneratedSample::finish(
            audio,
            request.target_class,
            Provenance {
                generator: self.profile.name.clone(),
                source_id: request.source_id.clone(),
                seed: request.seed,
                mode: self.profile.mode,
            },
            Vec::new(),
        ))
    }
}

#[cfg(test)]
mod tests;
