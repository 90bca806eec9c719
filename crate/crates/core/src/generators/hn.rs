//! Harmonic-plus-noise autoencoder.
//!
//! Per control frame the encoder maps a log-mel frame to a latent `z`; the
//! decoder maps `(f0, loudness, z)` to a global amplitude, a harmonic
//! distribution and noise-filter magnitudes. Training backpropagates the
//! multi-scale spectral loss through both synthesizers analytically.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::spectral::{SpectralLoss, FFT_SIZES};
use super::synth::{harmonic_adjoint, noise_adjoint, noise_excitation, noise_forward, NoiseBasis, SynthControls};
use super::{checked_source, generation_error, GeneratedSample, GenerationRequest, Generator, GeneratorProfile, Provenance};
use crate::corpus::AudioBuffer;
use crate::error::{Error, Result};
use crate::features::frames::{hann, next_pow2, RealFft};
use crate::features::{estimate_f0, loudness, mel::hz_to_mel, mel_spectrogram, ControlTrack, MelConfig};
use crate::nn::{glorot, Adam, Grads, Matrix, ParamId, ParamSet, Tape, Var};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HnConfig {
    pub sample_rate_hz: u32,
    pub frame_rate_hz: f64,
    pub n_harmonics: usize,
    pub n_noise_bands: usize,
    pub ir_len: usize,
    pub latent_dim: usize,
    pub hidden: usize,
    pub encoder_mels: usize,
    pub f0_range_hz: (f64, f64),
    /// Frames quieter than this synthesize nothing.
    pub silence_db: f64,
    pub segment_s: f64,
    pub learning_rate: f64,
    pub steps: usize,
    pub batch_size: usize,
    pub fft_sizes: Vec<usize>,
    pub seed: u64,
}

impl Default for HnConfig {
    fn default() -> Self {
        HnConfig {
            sample_rate_hz: 16_000,
            frame_rate_hz: 250.0,
            n_harmonics: 64,
            n_noise_bands: 65,
            ir_len: 256,
            latent_dim: 8,
            hidden: 64,
            encoder_mels: 32,
            f0_range_hz: (40.0, 2000.0),
            silence_db: -100.0,
            segment_s: 1.0,
            learning_rate: 3e-3,
            steps: 300,
            batch_size: 4,
            fft_sizes: FFT_SIZES.to_vec(),
            seed: 0,
        }
    }
}

impl HnConfig {
    pub fn hop(&self) -> usize {
        (self.sample_rate_hz as f64 / self.frame_rate_hz).round() as usize
    }

    fn encoder_mel(&self) -> MelConfig {
        MelConfig {
            sample_rate_hz: self.sample_rate_hz,
            window: 4 * self.hop(),
            hop: self.hop(),
            n_mels: self.encoder_mels,
            f_min_hz: 20.0,
            f_max_hz: (self.sample_rate_hz as f64 / 2.0).min(7600.0),
            log_eps: 1e-6,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.encoder_mel().validate()?;
        if self.n_harmonics == 0 || self.n_noise_bands < 2 || self.latent_dim == 0 || self.hidden == 0 {
            return Err(Error::Config("harmonic-noise sizes must be positive".into()));
        }
        if self.ir_len % 2 != 0 || self.ir_len < 4 {
            return Err(Error::Config("ir_len must be even and at least 4".into()));
        }
        if self.steps == 0 || self.batch_size == 0 || !(self.segment_s > 0.0) {
            return Err(Error::Config("steps, batch_size and segment_s must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct Layout {
    enc_w: ParamId,
    enc_b: ParamId,
    h1_w: ParamId,
    h1_b: ParamId,
    h2_w: ParamId,
    h2_b: ParamId,
    amp_w: ParamId,
    amp_b: ParamId,
    harm_w: ParamId,
    harm_b: ParamId,
    noise_w: ParamId,
    noise_b: ParamId,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HnModel {
    pub config: HnConfig,
    layout: Layout,
    pub params: ParamSet,
    /// Mean training loss per step.
    pub history: Vec<f64>,
}

/// Analysis of one excerpt: tracks plus the network input rows.
struct Analysis {
    f0: ControlTrack,
    loudness: ControlTrack,
    /// `[frames, encoder_mels]`.
    mel: Matrix,
    /// `[frames, 2]`: scaled f0 and loudness.
    pitch_loud: Matrix,
    /// Frames above the silence gate.
    active: Vec<bool>,
}

fn analyse(cfg: &HnConfig, audio: &AudioBuffer) -> Result<Analysis> {
    let (f0, _conf) = estimate_f0(audio, cfg.frame_rate_hz, cfg.f0_range_hz)?;
    let loud = loudness(audio, cfg.frame_rate_hz)?;
    let frames = f0.values.len();
    let mcfg = cfg.encoder_mel();
    let padded;
    let src = if audio.len() < mcfg.window {
        let mut s = audio.samples.clone();
        s.resize(mcfg.window, 0.0);
        padded = AudioBuffer::new(s, audio.sample_rate_hz);
        &padded
    } else {
        audio
    };
    let mel = mel_spectrogram(src, &mcfg)?;
    let floor = mcfg.log_eps.ln();
    let mut m = Matrix::zeros(frames, mcfg.n_mels);
    for i in 0..frames {
        let row = mel.frame(i.min(mel.n_frames - 1));
        for (o, v) in m.row_mut(i).iter_mut().zip(row) {
            *o = (*v as f64 - floor) / -floor;
        }
    }
    let fmax = hz_to_mel(cfg.sample_rate_hz as f64 / 2.0);
    let mut pl = Matrix::zeros(frames, 2);
    for i in 0..frames {
        pl.set(i, 0, hz_to_mel(f0.values[i]) / fmax);
        pl.set(i, 1, (loud.values[i] + 120.0) / 120.0);
    }
    let active = loud.values.iter().map(|l| *l >= cfg.silence_db).collect();
    Ok(Analysis {
        f0,
        loudness: loud,
        mel: m,
        pitch_loud: pl,
        active,
    })
}

struct Outputs {
    z: Var,
    amp: Var,
    harm: Var,
    noise: Var,
}

impl HnModel {
    fn init(cfg: &HnConfig, rng: &mut ChaCha8Rng) -> Self {
        let mut p = ParamSet::default();
        let h = cfg.hidden;
        let din = 2 + cfg.latent_dim;
        let noise_b = Matrix::filled(1, cfg.n_noise_bands, -4.0);
        let layout = Layout {
            enc_w: p.add("enc.w", glorot(rng, cfg.encoder_mels, cfg.latent_dim)),
            enc_b: p.add("enc.b", Matrix::zeros(1, cfg.latent_dim)),
            h1_w: p.add("dec.h1.w", glorot(rng, din, h)),
            h1_b: p.add("dec.h1.b", Matrix::zeros(1, h)),
            h2_w: p.add("dec.h2.w", glorot(rng, h, h)),
            h2_b: p.add("dec.h2.b", Matrix::zeros(1, h)),
            amp_w: p.add("dec.amp.w", glorot(rng, h, 1)),
            amp_b: p.add("dec.amp.b", Matrix::filled(1, 1, -2.0)),
            harm_w: p.add("dec.harm.w", glorot(rng, h, cfg.n_harmonics)),
            harm_b: p.add("dec.harm.b", Matrix::zeros(1, cfg.n_harmonics)),
            noise_w: p.add("dec.noise.w", glorot(rng, h, cfg.n_noise_bands)),
            noise_b: p.add("dec.noise.b", noise_b),
        };
        HnModel {
            config: cfg.clone(),
            layout,
            params: p,
            history: Vec::new(),
        }
    }

    fn dense(t: &mut Tape, x: Var, w: ParamId, b: ParamId) -> Var {
        let (w, b) = (t.param(w), t.param(b));
        let y = t.matmul(x, w);
        t.add_row(y, b)
    }

    fn forward(&self, t: &mut Tape, a: &Analysis) -> Outputs {
        let l = &self.layout;
        let mel = t.constant(a.mel.clone());
        let z = Self::dense(t, mel, l.enc_w, l.enc_b);
        let z = t.tanh(z);
        let pl = t.constant(a.pitch_loud.clone());
        let x = t.concat_cols(&[pl, z]);
        let h = Self::dense(t, x, l.h1_w, l.h1_b);
        let h = t.silu(h);
        let h = Self::dense(t, h, l.h2_w, l.h2_b);
        let h = t.silu(h);
        let amp = Self::dense(t, h, l.amp_w, l.amp_b);
        let amp = t.sigmoid(amp);
        let harm = Self::dense(t, h, l.harm_w, l.harm_b);
        let harm = t.softmax_rows(harm);
        let noise = Self::dense(t, h, l.noise_w, l.noise_b);
        let noise = t.sigmoid(noise);
        Outputs { z, amp, harm, noise }
    }

    /// Synthesizer controls for an excerpt, silence gate applied.
    pub fn controls(&self, audio: &AudioBuffer) -> Result<SynthControls> {
        let a = analyse(&self.config, audio)?;
        let mut t = Tape::new(&self.params);
        let o = self.forward(&mut t, &a);
        let (amp, noise) = gated(&a.active, t.value(o.amp), t.value(o.noise));
        Ok(SynthControls {
            f0: a.f0,
            loudness: a.loudness,
            z: t.value(o.z).clone(),
            amplitude: amp,
            harmonic_distribution: t.value(o.harm).clone(),
            noise_mags: noise,
        })
    }

    /// Harmonic plus noise audio for given controls.
    pub fn synthesize(&self, c: &SynthControls, n_samples: usize, seed: u64) -> Result<AudioBuffer> {
        let cfg = &self.config;
        let h = super::harmonic_synth(&c.f0, &c.amplitude, &c.harmonic_distribution, cfg.sample_rate_hz, n_samples)?;
        let basis = NoiseBasis::new(cfg.n_noise_bands, cfg.ir_len);
        let n = super::noise_synth(&c.noise_mags, cfg.frame_rate_hz, cfg.sample_rate_hz, n_samples, &basis, seed)?;
        let samples = h.samples.iter().zip(&n.samples).map(|(a, b)| a + b).collect();
        Ok(AudioBuffer::new(samples, cfg.sample_rate_hz))
    }
}

fn gated(active: &[bool], amp: &Matrix, noise: &Matrix) -> (Vec<f64>, Matrix) {
    let mut a: Vec<f64> = amp.data.clone();
    let mut n = noise.clone();
    for (i, on) in active.iter().enumerate() {
        if !on {
            a[i] = 0.0;
            n.row_mut(i).iter_mut().for_each(|v| *v = 0.0);
        }
    }
    (a, n)
}

struct Segment {
    analysis: Analysis,
    target: SpectralLoss,
    len: usize,
}

/// Loss and parameter gradients for one segment.
fn segment_grads(model: &HnModel, basis: &NoiseBasis, seg: &Segment, noise_seed: u64) -> (f64, Grads) {
    let cfg = &model.config;
    let hop = cfg.hop();
    let a = &seg.analysis;
    let frames = a.f0.values.len();
    let mut t = Tape::new(&model.params);
    let o = model.forward(&mut t, a);
    let (amp, noise) = gated(&a.active, t.value(o.amp), t.value(o.noise));
    let dist = t.value(o.harm).clone();
    let harm = super::harmonic_synth(&a.f0, &amp, &dist, cfg.sample_rate_hz, seg.len).expect("validated controls");
    let exc = noise_excitation(frames, hop, noise_seed);
    let nz = noise_forward(&noise, hop, seg.len, basis, &exc);
    let y: Vec<f64> = harm.samples.iter().zip(&nz).map(|(h, n)| *h as f64 + n).collect();
    let (loss, g) = seg.target.loss_and_grad(&y);
    let (mut ga, mut gc) = harmonic_adjoint(&a.f0, &amp, &dist, cfg.sample_rate_hz, &g);
    let mut gn = noise_adjoint(frames, hop, basis, &exc, &g);
    for (i, on) in a.active.iter().enumerate() {
        if !on {
            ga[i] = 0.0;
            gc.row_mut(i).iter_mut().for_each(|v| *v = 0.0);
            gn.row_mut(i).iter_mut().for_each(|v| *v = 0.0);
        }
    }
    let grads = t.backward_from(&[
        (o.amp, Matrix::from_vec(frames, 1, ga)),
        (o.harm, gc),
        (o.noise, gn),
    ]);
    (loss, grads)
}

/// Cuts training audio into whole segments of `cfg.segment_s`.
fn segments(cfg: &HnConfig, audio: &[AudioBuffer]) -> Result<Vec<Segment>> {
    let len = (cfg.segment_s * cfg.sample_rate_hz as f64).round() as usize;
    let mut pieces = Vec::new();
    for a in audio {
        if a.sample_rate_hz != cfg.sample_rate_hz {
            return Err(Error::invalid(format!(
                "training audio at {} Hz, model rate {} Hz",
                a.sample_rate_hz, cfg.sample_rate_hz
            )));
        }
        let mut s = 0;
        while s + len <= a.len() {
            pieces.push(a.excerpt(s, len));
            s += len;
        }
    }
    if pieces.is_empty() {
        return Err(Error::invalid("no training audio as long as one segment"));
    }
    crate::exec::map_slice(&pieces, |p| {
        let target: Vec<f64> = p.samples.iter().map(|v| *v as f64).collect();
        Ok(Segment {
            analysis: analyse(cfg, p)?,
            target: SpectralLoss::with_sizes(&target, &cfg.fft_sizes),
            len,
        })
    })
    .into_iter()
    .collect()
}

pub fn hn_train(train_set: &[AudioBuffer], cfg: &HnConfig) -> Result<HnModel> {
    cfg.validate()?;
    let segs = segments(cfg, train_set)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut model = HnModel::init(cfg, &mut rng);
    let basis = NoiseBasis::new(cfg.n_noise_bands, cfg.ir_len);
    let mut adam = Adam::new(&model.params, cfg.learning_rate).with_clip(10.0);
    let mut order: Vec<usize> = Vec::new();
    for step in 0..cfg.steps {
        if order.len() < cfg.batch_size {
            let mut fresh: Vec<usize> = (0..segs.len()).collect();
            fresh.shuffle(&mut rng);
            order.extend(fresh);
        }
        let batch: Vec<(usize, u64)> = order
            .drain(..cfg.batch_size.min(order.len()))
            .enumerate()
            .map(|(j, i)| (i, cfg.seed ^ ((step * cfg.batch_size + j) as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15)))
            .collect();
        let parts = crate::exec::map_slice(&batch, |&(i, s)| segment_grads(&model, &basis, &segs[i], s));
        let loss = parts.iter().map(|p| p.0).sum::<f64>() / batch.len() as f64;
        if !loss.is_finite() {
            return Err(Error::Diverged { epoch: step });
        }
        let mut g = Grads::sum_ordered(parts.into_iter().map(|p| p.1).collect()).expect("non-empty batch");
        g.scale(1.0 / batch.len() as f64);
        adam.step(&mut model.params, &g);
        model.history.push(loss);
        if step % 50 == 0 {
            log::debug!("hn step {step}: loss {loss:.4}");
        }
    }
    Ok(model)
}

pub const FLAG_POLYPHONIC: &str = "polyphonic approximation";
pub const FLAG_UNVOICED: &str = "noise-only reconstruction";

/// Encode, decode and resynthesize `request.source` (label inherited from
/// the request).
pub fn hn_reconstruct(model: &HnModel, profile: &GeneratorProfile, request: &GenerationRequest) -> Result<GeneratedSample> {
    let src = request
        .source
        .as_ref()
        .ok_or_else(|| generation_error(profile, request, "request carries no source audio"))?;
    if src.is_empty() {
        return Err(generation_error(profile, request, "empty source"));
    }
    if src.sample_rate_hz != model.config.sample_rate_hz {
        return Err(generation_error(
            profile,
            request,
            format!("source at {} Hz, model at {} Hz", src.sample_rate_hz, model.config.sample_rate_hz),
        ));
    }
    let wrap = |e: Error| generation_error(profile, request, e.to_string());
    let controls = model.controls(src).map_err(wrap)?;
    let audio = model.synthesize(&controls, src.len(), request.seed).map_err(wrap)?;
    let mut flags = Vec::new();
    if controls.f0.values.iter().all(|f| *f == 0.0) {
        flags.push(FLAG_UNVOICED.to_string());
    }
    if is_polyphonic(src) {
        flags.push(FLAG_POLYPHONIC.to_string());
    }
    Ok(GeneratedSample::finish(
        audio,
        request.target_class,
        Provenance {
            generator: profile.name.clone(),
            source_id: request.source_id.clone(),
            seed: request.seed,
            mode: profile.mode,
        },
        flags,
    ))
}

/// True when prominent spectral peaks are not all near integer multiples of
/// the lowest one.
pub fn is_polyphonic(audio: &AudioBuffer) -> bool {
    let rate = audio.sample_rate_hz as f64;
    let n = next_pow2((audio.len() / 2).max(256)).min(8192);
    let window = hann(n);
    let mut fft = RealFft::new(n);
    let mut acc = vec![0.0; n / 2 + 1];
    let mut mags = vec![0.0; n / 2 + 1];
    let mut frame = vec![0.0; n];
    let mut start = 0;
    loop {
        for (t, f) in frame.iter_mut().enumerate() {
            *f = audio.samples.get(start + t).copied().unwrap_or(0.0) as f64 * window[t];
        }
        fft.magnitudes(&frame, &mut mags);
        for (a, m) in acc.iter_mut().zip(&mags) {
            *a += m;
        }
        start += n / 2;
        if start + n > audio.len() {
            break;
        }
    }
    let max = acc.iter().cloned().fold(0.0, f64::max);
    if max <= 0.0 {
        return false;
    }
    let lo_bin = (30.0 * n as f64 / rate).ceil() as usize;
    let mut peaks = Vec::new();
    for k in lo_bin.max(1)..acc.len() - 1 {
        if acc[k] > 0.1 * max && acc[k] >= acc[k - 1] && acc[k] > acc[k + 1] {
            let (a, b, c) = (acc[k - 1], acc[k], acc[k + 1]);
            let den = a - 2.0 * b + c;
            let off = if den.abs() > 0.0 { 0.5 * (a - c) / den } else { 0.0 };
            peaks.push((k as f64 + off) * rate / n as f64);
        }
    }
    let Some(&f_low) = peaks.first() else { return false };
    peaks.iter().any(|&f| {
        let r = (f / f_low).round().max(1.0);
        (f - r * f_low).abs() > 0.03 * f
    })
}

/// Reconstruction-mode generator around a trained model.
pub struct HnGenerator {
    pub model: HnModel,
    pub profile: GeneratorProfile,
}

impl Generator for HnGenerator {
    fn profile(&self) -> &GeneratorProfile {
        &self.profile
    }

    fn generate(&self, request: &GenerationRequest) -> Result<GeneratedSample> {
        checked_source(&self.profile, request)?;
        hn_reconstruct(&self.model, &self.profile, request)
    }
}

#[cfg(test)]
mod tests;
