use serde::{Deserialize, Serialize};

use super::frames::{fnv1a, frame_count, hann, reflected_frame, RealFft};
use crate::corpus::AudioBuffer;
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MelConfig {
    pub sample_rate_hz: u32,
    pub window: usize,
    pub hop: usize,
    pub n_mels: usize,
    pub f_min_hz: f64,
    pub f_max_hz: f64,
    pub log_eps: f64,
}

impl Default for MelConfig {
    fn default() -> Self {
        MelConfig {
            sample_rate_hz: 16_000,
            window: 1024,
            hop: 512,
            n_mels: 96,
            f_min_hz: 20.0,
            f_max_hz: 7_600.0,
            log_eps: 1e-6,
        }
    }
}

impl MelConfig {
    pub fn frame_rate_hz(&self) -> f64 {
        self.sample_rate_hz as f64 / self.hop as f64
    }

    pub fn fingerprint(&self) -> u64 {
        let key = format!(
            "mel:v1:{}:{}:{}:{}:{:e}:{:e}:{:e}",
            self.sample_rate_hz,
            self.window,
            self.hop,
            self.n_mels,
            self.f_min_hz,
            self.f_max_hz,
            self.log_eps
        );
        fnv1a(key.as_bytes())
    }

    pub fn validate(&self) -> Result<()> {
        if self.window < 2 || self.hop == 0 || self.n_mels == 0 {
            return Err(Error::invalid("mel window, hop and n_mels must be positive"));
        }
        let nyq = self.sample_rate_hz as f64 / 2.0;
        if !(0.0 <= self.f_min_hz && self.f_min_hz < self.f_max_hz && self.f_max_hz <= nyq) {
            return Err(Error::invalid("mel band edges must satisfy 0 <= f_min < f_max <= nyquist"));
        }
        if self.log_eps <= 0.0 {
            return Err(Error::invalid("log_eps must be positive"));
        }
        Ok(())
    }
}

pub fn hz_to_mel(f: f64) -> f64 {
    2595.0 * (1.0 + f / 700.0).log10()
}

pub fn mel_to_hz(m: f64) -> f64 {
    700.0 * (10f64.powf(m / 2595.0) - 1.0)
}

/// Centre frequencies of the triangular filters.
pub fn mel_center_frequencies(cfg: &MelConfig) -> Vec<f64> {
    let pts = mel_edges(cfg);
    pts[1..cfg.n_mels + 1].to_vec()
}

fn mel_edges(cfg: &MelConfig) -> Vec<f64> {
    let lo = hz_to_mel(cfg.f_min_hz);
    let hi = hz_to_mel(cfg.f_max_hz);
    (0..cfg.n_mels + 2)
        .map(|i| mel_to_hz(lo + (hi - lo) * i as f64 / (cfg.n_mels + 1) as f64))
        .collect()
}

/// Sparse triangular filterbank with unit peaks.
struct Filterbank {
    /// Per filter: first bin and weights.
    filters: Vec<(usize, Vec<f64>)>,
}

impl Filterbank {
    fn new(cfg: &MelConfig) -> Self {
        let edges = mel_edges(cfg);
        let n_bins = cfg.window / 2 + 1;
        let bin_hz = cfg.sample_rate_hz as f64 / cfg.window as f64;
        let filters = (0..cfg.n_mels)
            .map(|m| {
                let (l, c, u) = (edges[m], edges[m + 1], edges[m + 2]);
                let mut first = None;
                let mut w = Vec::new();
                for k in 0..n_bins {
                    let f = k as f64 * bin_hz;
                    let v = if f > l && f <= c {
                        (f - l) / (c - l)
                    } else if f > c && f < u {
                        (u - f) / (u - c)
                    } else {
                        0.0
                    };
                    if v > 0.0 {
                        first.get_or_insert(k);
                        w.push(v);
                    } else if first.is_some() {
                        break;
                    }
                }
                (first.unwrap_or(0), w)
            })
            .collect();
        Filterbank { filters }
    }

    fn apply(&self, mags: &[f64], out: &mut [f64]) {
        for (o, (start, w)) in out.iter_mut().zip(&self.filters) {
            *o = w.iter().zip(&mags[*start..]).map(|(a, b)| a * b).sum();
        }
    }
}

/// Log-mel magnitude spectrogram, `[n_frames x n_mels]` row-major.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MelSpectrogram {
    pub n_frames: usize,
    pub n_mels: usize,
    pub data: Vec<f32>,
    pub frame_rate_hz: f64,
    pub config_fingerprint: u64,
}

impl MelSpectrogram {
    pub fn frame(&self, i: usize) -> &[f32] {
        &self.data[i * self.n_mels..(i + 1) * self.n_mels]
    }

    /// Mean over frames of each mel bin.
    pub fn mean_vector(&self) -> Vec<f64> {
        let mut m = vec![0.0; self.n_mels];
        for i in 0..self.n_frames {
            for (a, b) in m.iter_mut().zip(self.frame(i)) {
                *a += *b as f64;
            }
        }
        m.iter_mut().for_each(|x| *x /= self.n_frames as f64);
        m
    }
}

/// STFT magnitude -> mel filterbank -> `ln(x + eps)`, with centred
/// reflection-padded framing yielding `ceil(len / hop)` frames.
pub fn mel_spectrogram(buffer: &AudioBuffer, cfg: &MelConfig) -> Result<MelSpectrogram> {
    cfg.validate()?;
    if buffer.sample_rate_hz != cfg.sample_rate_hz {
        return Err(Error::invalid(format!(
            "buffer rate {} Hz does not match mel config rate {} Hz",
            buffer.sample_rate_hz, cfg.sample_rate_hz
        )));
    }
    if buffer.len() < cfg.window {
        return Err(Error::invalid(format!(
            "buffer of {} samples is shorter than one window ({})",
            buffer.len(),
            cfg.window
        )));
    }
    let n_frames = frame_count(buffer.len(), cfg.hop);
    let fb = Filterbank::new(cfg);
    let window = hann(cfg.window);
    let half = (cfg.window / 2) as isize;

    let chunk = 64;
    let n_chunks = n_frames.div_ceil(chunk);
    let rows: Vec<Vec<f32>> = crate::exec::map_range(n_chunks, |ci| {
        let mut fft = RealFft::new(cfg.window);
        let mut frame = vec![0.0; cfg.window];
        let mut mags = vec![0.0; cfg.window / 2 + 1];
        let mut mel = vec![0.0; cfg.n_mels];
        let mut out = Vec::with_capacity(chunk * cfg.n_mels);
        for i in ci * chunk..((ci + 1) * chunk).min(n_frames) {
            let start = (i * cfg.hop) as isize - half;
            reflected_frame(&buffer.samples, start, &mut frame);
            for (x, w) in frame.iter_mut().zip(&window) {
                *x *= w;
            }
            fft.magnitudes(&frame, &mut mags);
            fb.apply(&mags, &mut mel);
            out.extend(mel.iter().map(|v| (v + cfg.log_eps).ln() as f32));
        }
        out
    });
    Ok(MelSpectrogram {
        n_frames,
        n_mels: cfg.n_mels,
        data: rows.concat(),
        frame_rate_hz: cfg.frame_rate_hz(),
        config_fingerprint: cfg.fingerprint(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn tone(freq: f64, n: usize) -> AudioBuffer {
        AudioBuffer::new(
            (0..n)
                .map(|i| (0.5 * (2.0 * PI * freq * i as f64 / 16000.0).sin()) as f32)
                .collect(),
            16000,
        )
    }

    #[test]
    fn silence_maps_to_log_eps() {
        let cfg = MelConfig::default();
        let m = mel_spectrogram(&AudioBuffer::silence(4096, 16000), &cfg).unwrap();
        let expect = (1e-6f64).ln() as f32;
        assert!(m.data.iter().all(|v| *v == expect));
    }

    #[test]
    fn frame_count_follows_ceiling_rule() {
        let cfg = MelConfig::default();
        let m = mel_spectrogram(&tone(440.0, 16000), &cfg).unwrap();
        assert_eq!(m.n_frames, 32);
        assert_eq!(m.n_mels, 96);
        assert_eq!(m.frame_rate_hz, 31.25);
    }

    #[test]
    fn tone_peaks_in_nearest_filter() {
        let cfg = MelConfig::default();
        let m = mel_spectrogram(&tone(440.0, 16000), &cfg).unwrap();
        // Oracle: centre frequencies recomputed from the mel formula.
        let lo = 2595.0 * (1.0f64 + 20.0 / 700.0).log10();
        let hi = 2595.0 * (1.0f64 + 7600.0 / 700.0).log10();
        let centers: Vec<f64> = (1..=96)
            .map(|i| 700.0 * (10f64.powf((lo + (hi - lo) * i as f64 / 97.0) / 2595.0) - 1.0))
            .collect();
        let nearest = centers
            .iter()
            .enumerate()
            .min_by(|a, b| (a.1 - 440.0).abs().partial_cmp(&(b.1 - 440.0).abs()).unwrap())
            .unwrap()
            .0;
        let mid = m.frame(m.n_frames / 2);
        let argmax = mid
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
            .unwrap()
            .0;
        assert_eq!(argmax, nearest);
    }

    #[test]
    fn short_buffer_rejected() {
        assert!(mel_spectrogram(&tone(440.0, 1000), &MelConfig::default()).is_err());
    }

    #[test]
    fn fingerprint_tracks_parameters() {
        let a = MelConfig::default();
        let mut b = a.clone();
        b.n_mels = 64;
        assert_ne!(a.fingerprint(), b.fingerprint());
        assert_eq!(a.fingerprint(), MelConfig::default().fingerprint());
    }
}
