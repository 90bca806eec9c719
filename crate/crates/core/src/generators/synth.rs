//! Harmonic-plus-noise synthesis and the adjoints used for training.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::AudioBuffer;
use crate::error::{Error, Result};
use crate::features::frames::hann;
use crate::features::ControlTrack;
use crate::nn::Matrix;

/// Decoder outputs plus the analysis tracks they were derived from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthControls {
    pub f0: ControlTrack,
    pub loudness: ControlTrack,
    /// `[frames, latent]`.
    pub z: Matrix,
    /// Global amplitude per frame.
    pub amplitude: Vec<f64>,
    /// `[frames, K]`, rows sum to one.
    pub harmonic_distribution: Matrix,
    /// `[frames, M]` noise filter magnitudes.
    pub noise_mags: Matrix,
}

/// Linear interpolation of frame-rate controls to sample `n`.
#[derive(Clone, Copy)]
struct Interp {
    i0: usize,
    i1: usize,
    w: f64,
}

fn interp(n: usize, hop: usize, frames: usize) -> Interp {
    let u = n as f64 / hop as f64;
    let i0 = (u.floor() as usize).min(frames - 1);
    let i1 = (i0 + 1).min(frames - 1);
    Interp { i0, i1, w: u - i0 as f64 }
}

impl Interp {
    fn at(&self, v: &[f64]) -> f64 {
        (1.0 - self.w) * v[self.i0] + self.w * v[self.i1]
    }
}

fn hop_of(rate: u32, frame_rate: f64) -> usize {
    (rate as f64 / frame_rate).round() as usize
}

/// Sample-rate f0 and phase (exclusive running sum of `2 pi f0 / rate`).
fn phases(f0: &[f64], hop: usize, rate: u32, n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut f = Vec::with_capacity(n);
    let mut phi = Vec::with_capacity(n);
    let mut acc = 0.0f64;
    let step = 2.0 * std::f64::consts::PI / rate as f64;
    for i in 0..n {
        let fi = interp(i, hop, f0.len()).at(f0);
        phi.push(acc);
        f.push(fi);
        acc += step * fi;
        if acc > 1e6 {
            acc %= 2.0 * std::f64::consts::PI;
        }
    }
    (f, phi)
}

/// Fills `out[k] = sin((k+1) phi)` for harmonics below Nyquist, zero above
/// and everywhere when `f` is zero (unvoiced).
fn harmonic_bank(phi: f64, f: f64, nyquist: f64, out: &mut [f64]) {
    let (s1, c1) = phi.sin_cos();
    let (mut prev, mut cur) = (0.0, s1);
    for (k, o) in out.iter_mut().enumerate() {
        *o = if f > 0.0 && (k + 1) as f64 * f < nyquist { cur } else { 0.0 };
        let next = 2.0 * c1 * cur - prev;
        prev = cur;
        cur = next;
    }
}

fn check_frames(f0: &ControlTrack, amplitude: &[f64], dist: &Matrix) -> Result<()> {
    if amplitude.len() != f0.values.len() || dist.rows != f0.values.len() {
        return Err(Error::Mismatch(format!(
            "control frames differ: f0 {}, amplitude {}, distribution {}",
            f0.values.len(),
            amplitude.len(),
            dist.rows
        )));
    }
    if f0.values.is_empty() {
        return Err(Error::invalid("empty control track"));
    }
    if let Some(v) = f0.values.iter().find(|v| **v < 0.0 || !v.is_finite()) {
        return Err(Error::invalid(format!("negative or non-finite f0 {v}")));
    }
    Ok(())
}

/// `x(t) = A(t) sum_k c_k(t) sin(k phi(t))` with controls linearly upsampled
/// from the f0 track's frame rate; harmonics at or above Nyquist are muted
/// sample by sample.
pub fn harmonic_synth(
    f0: &ControlTrack,
    amplitude: &[f64],
    distribution: &Matrix,
    rate: u32,
    n_samples: usize,
) -> Result<AudioBuffer> {
    check_frames(f0, amplitude, distribution)?;
    let hop = hop_of(rate, f0.frame_rate_hz);
    let (f, phi) = phases(&f0.values, hop, rate, n_samples);
    let k = distribution.cols;
    let nyq = rate as f64 / 2.0;
    let mut bank = vec![0.0; k];
    let mut c = vec![0.0; k];
    let mut out = Vec::with_capacity(n_samples);
    for n in 0..n_samples {
        let ip = interp(n, hop, amplitude.len());
        let a = ip.at(amplitude);
        harmonic_bank(phi[n], f[n], nyq, &mut bank);
        for (j, cj) in c.iter_mut().enumerate() {
            *cj = (1.0 - ip.w) * distribution.get(ip.i0, j) + ip.w * distribution.get(ip.i1, j);
        }
        let s: f64 = bank.iter().zip(&c).map(|(b, c)| b * c).sum();
        out.push((a * s) as f32);
    }
    Ok(AudioBuffer::new(out, rate))
}

/// Gradients of `sum_n g[n] x[n]` with respect to the amplitude and the
/// harmonic distribution.
pub(crate) fn harmonic_adjoint(
    f0: &ControlTrack,
    amplitude: &[f64],
    distribution: &Matrix,
    rate: u32,
    g: &[f64],
) -> (Vec<f64>, Matrix) {
    let hop = hop_of(rate, f0.frame_rate_hz);
    let (f, phi) = phases(&f0.values, hop, rate, g.len());
    let k = distribution.cols;
    let frames = amplitude.len();
    let nyq = rate as f64 / 2.0;
    let mut ga = vec![0.0; frames];
    let mut gc = Matrix::zeros(frames, k);
    let mut bank = vec![0.0; k];
    for (n, &gn) in g.iter().enumerate() {
        if gn == 0.0 || f[n] <= 0.0 {
            continue;
        }
        let ip = interp(n, hop, frames);
        let a = ip.at(amplitude);
        harmonic_bank(phi[n], f[n], nyq, &mut bank);
        let mut s = 0.0;
        for (j, b) in bank.iter().enumerate() {
            let cj = (1.0 - ip.w) * distribution.get(ip.i0, j) + ip.w * distribution.get(ip.i1, j);
            s += b * cj;
        }
        ga[ip.i0] += gn * (1.0 - ip.w) * s;
        ga[ip.i1] += gn * ip.w * s;
        let (w0, w1) = (gn * a * (1.0 - ip.w), gn * a * ip.w);
        for (j, b) in bank.iter().enumerate() {
            if *b != 0.0 {
                gc.data[ip.i0 * k + j] += w0 * b;
                gc.data[ip.i1 * k + j] += w1 * b;
            }
        }
    }
    (ga, gc)
}

/// Linear-phase FIR bases: the impulse response for magnitudes `H` is
/// `sum_m H[m] basis[m]`.
#[derive(Clone, Debug)]
pub struct NoiseBasis {
    pub ir_len: usize,
    pub n_bands: usize,
    /// `[M, ir_len]`.
    basis: Matrix,
}

impl NoiseBasis {
    pub fn new(n_bands: usize, ir_len: usize) -> Self {
        assert!(n_bands >= 2 && ir_len >= 4 && ir_len % 2 == 0);
        let n_bins = ir_len / 2 + 1;
        let window = hann(ir_len);
        let mut basis = Matrix::zeros(n_bands, ir_len);
        for m in 0..n_bands {
            // Magnitude response of band m alone, linear interpolation
            // from band centres onto FFT bins.
            let resp: Vec<f64> = (0..n_bins)
                .map(|b| {
                    let pos = b as f64 * (n_bands - 1) as f64 / (n_bins - 1) as f64;
                    (1.0 - (pos - m as f64).abs()).max(0.0)
                })
                .collect();
            // Inverse real DFT of a zero-phase spectrum = cosine sum.
            let ir = inverse_zero_phase(&resp, ir_len);
            let row = basis.row_mut(m);
            for t in 0..ir_len {
                // Roll so the response is centred.
                row[t] = ir[(t + ir_len - ir_len / 2) % ir_len] * window[t];
            }
        }
        NoiseBasis {
            ir_len,
            n_bands,
            basis,
        }
    }

    /// Band `m` spans `(f_{m-1}, f_{m+1})` Hz.
    pub fn band_edges_hz(&self, m: usize, rate: u32) -> (f64, f64) {
        let spacing = rate as f64 / 2.0 / (self.n_bands - 1) as f64;
        ((m as f64 - 1.0).max(0.0) * spacing, (m as f64 + 1.0).min((self.n_bands - 1) as f64) * spacing)
    }

    fn impulse(&self, mags: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|v| *v = 0.0);
        for (m, h) in mags.iter().enumerate() {
            if *h != 0.0 {
                for (o, b) in out.iter_mut().zip(self.basis.row(m)) {
                    *o += h * b;
                }
            }
        }
    }
}

fn inverse_zero_phase(resp: &[f64], n: usize) -> Vec<f64> {
    let nb = resp.len();
    (0..n)
        .map(|t| {
            let mut s = resp[0];
            for (k, r) in resp.iter().enumerate().take(nb - 1).skip(1) {
                s += 2.0 * r * (2.0 * std::f64::consts::PI * (k * t) as f64 / n as f64).cos();
            }
            s += resp[nb - 1] * if t % 2 == 0 { 1.0 } else { -1.0 };
            s / n as f64
        })
        .collect()
}

/// Per-frame uniform noise segments, one hop long each.
pub(crate) fn noise_excitation(frames: usize, hop: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..frames * hop).map(|_| rng.random_range(-1.0..1.0)).collect()
}

fn check_mags(mags: &Matrix, basis: &NoiseBasis) -> Result<()> {
    if mags.cols != basis.n_bands {
        return Err(Error::Mismatch(format!("{} bands, basis has {}", mags.cols, basis.n_bands)));
    }
    if let Some(v) = mags.data.iter().find(|v| **v < 0.0 || !v.is_finite()) {
        return Err(Error::invalid(format!("noise magnitude {v} is negative or non-finite")));
    }
    Ok(())
}

/// Filtered-noise synthesis: frame `i` owns samples `[i*hop, (i+1)*hop)` of
/// uniform white noise, filtered by its own linear-phase FIR; outputs are
/// overlap-added.
pub fn noise_synth(
    mags: &Matrix,
    frame_rate_hz: f64,
    rate: u32,
    n_samples: usize,
    basis: &NoiseBasis,
    seed: u64,
) -> Result<AudioBuffer> {
    check_mags(mags, basis)?;
    let hop = hop_of(rate, frame_rate_hz);
    let exc = noise_excitation(mags.rows, hop, seed);
    let out = noise_forward(mags, hop, n_samples, basis, &exc);
    Ok(AudioBuffer::new(out.iter().map(|v| *v as f32).collect(), rate))
}

pub(crate) fn noise_forward(mags: &Matrix, hop: usize, n_samples: usize, basis: &NoiseBasis, exc: &[f64]) -> Vec<f64> {
    let l = basis.ir_len;
    let half = l / 2;
    let mut out = vec![0.0; n_samples];
    let mut h = vec![0.0; l];
    for i in 0..mags.rows {
        if mags.row(i).iter().all(|v| *v == 0.0) {
            continue;
        }
        basis.impulse(mags.row(i), &mut h);
        let seg = &exc[i * hop..(i + 1) * hop];
        for (t, u) in seg.iter().enumerate() {
            let base = (i * hop + t) as isize - half as isize;
            for (j, hj) in h.iter().enumerate() {
                let idx = base + j as isize;
                if idx >= 0 && (idx as usize) < n_samples {
                    out[idx as usize] += u * hj;
                }
            }
        }
    }
    out
}

/// Gradient of `sum_n g[n] y[n]` with respect to the magnitudes.
pub(crate) fn noise_adjoint(frames: usize, hop: usize, basis: &NoiseBasis, exc: &[f64], g: &[f64]) -> Matrix {
    let l = basis.ir_len;
    let half = l / 2;
    let n = g.len();
    let mut out = Matrix::zeros(frames, basis.n_bands);
    let mut gh = vec![0.0; l];
    for i in 0..frames {
        gh.iter_mut().for_each(|v| *v = 0.0);
        let seg = &exc[i * hop..(i + 1) * hop];
        for (t, u) in seg.iter().enumerate() {
            let base = (i * hop + t) as isize - half as isize;
            for (j, v) in gh.iter_mut().enumerate() {
                let idx = base + j as isize;
                if idx >= 0 && (idx as usize) < n {
                    *v += u * g[idx as usize];
                }
            }
        }
        for m in 0..basis.n_bands {
            out.data[i * basis.n_bands + m] = basis.basis.row(m).iter().zip(&gh).map(|(a, b)| a * b).sum();
        }
    }
    out
}
