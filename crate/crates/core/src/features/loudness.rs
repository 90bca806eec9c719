use super::frames::{frame_count, hann, next_pow2, reflected_frame, RealFft};
use super::{ControlKind, ControlTrack};
use crate::corpus::AudioBuffer;
use crate::error::{Error, Result};

pub const LOUDNESS_FLOOR_DB: f64 = -120.0;

/// A-weighting power gain (linear) at `f` Hz, normalised to 0 dB at 1 kHz.
pub fn a_weight_power(f: f64) -> f64 {
    if f <= 0.0 {
        return 0.0;
    }
    let f2 = f * f;
    let num = 12194.0f64.powi(2) * f2 * f2;
    let den = (f2 + 20.6f64.powi(2))
        * ((f2 + 107.7f64.powi(2)) * (f2 + 737.9f64.powi(2))).sqrt()
        * (f2 + 12194.0f64.powi(2));
    let db = 20.0 * (num / den).log10() + 2.0;
    10f64.powf(db / 10.0)
}

/// Hop length in samples for a control frame rate.
pub fn hop_for(rate_hz: u32, frame_rate_hz: f64) -> Result<usize> {
    if !(frame_rate_hz > 0.0) || frame_rate_hz > rate_hz as f64 {
        return Err(Error::invalid(format!("frame rate {frame_rate_hz} Hz invalid for {rate_hz} Hz audio")));
    }
    Ok((rate_hz as f64 / frame_rate_hz).round().max(1.0) as usize)
}

/// Per-frame A-weighted mean power in dB (re full-scale square wave),
/// floored at -120 dB. Frames are centred at multiples of the hop.
pub fn loudness(buffer: &AudioBuffer, frame_rate_hz: f64) -> Result<ControlTrack> {
    let hop = hop_for(buffer.sample_rate_hz, frame_rate_hz)?;
    let n_fft = next_pow2(2 * hop).max(next_pow2((buffer.sample_rate_hz / 16) as usize));
    let rate = buffer.sample_rate_hz as f64;
    if buffer.is_empty() {
        return Ok(ControlTrack::new(vec![LOUDNESS_FLOOR_DB], frame_rate_hz, ControlKind::LoudnessDb));
    }
    let window = hann(n_fft);
    let win_energy: f64 = window.iter().map(|w| w * w).sum();
    let weights: Vec<f64> = (0..=n_fft / 2)
        .map(|k| {
            let one_sided = if k == 0 || k == n_fft / 2 { 1.0 } else { 2.0 };
            one_sided * a_weight_power(k as f64 * rate / n_fft as f64)
        })
        .collect();
    let n_frames = frame_count(buffer.len(), hop);
    let half = (n_fft / 2) as isize;
    let chunk = 128;
    let parts: Vec<Vec<f64>> = crate::exec::map_range(n_frames.div_ceil(chunk), |ci| {
        let mut fft = RealFft::new(n_fft);
        let mut frame = vec![0.0; n_fft];
        let mut out = Vec::with_capacity(chunk);
        for i in ci * chunk..((ci + 1) * chunk).min(n_frames) {
            reflected_frame(&buffer.samples, (i * hop) as isize - half, &mut frame);
            for (x, w) in frame.iter_mut().zip(&window) {
                *x *= w;
            }
            let spec = fft.spectrum(&frame);
            let p: f64 = spec[..=n_fft / 2]
                .iter()
                .zip(&weights)
                .map(|(c, w)| c.norm_sqr() * w)
                .sum::<f64>()
                / (n_fft as f64 * win_energy);
            out.push(if p > 1e-12 {
                (10.0 * p.log10()).max(LOUDNESS_FLOOR_DB)
            } else {
                LOUDNESS_FLOOR_DB
            });
        }
        out
    });
    Ok(ControlTrack::new(parts.concat(), frame_rate_hz, ControlKind::LoudnessDb))
}
