//! YIN-style fundamental frequency tracking.
//!
//! The squared-difference function is computed from an FFT cross-correlation
//! plus running energies, then normalised by its cumulative mean. The first
//! dip below the absolute threshold (followed down to its local minimum) is
//! refined by parabolic interpolation.

use rustfft::num_complex::Complex64;

use super::frames::{frame_count, next_pow2, reflected_frame, ComplexFft};
use super::loudness::hop_for;
use super::{ControlKind, ControlTrack};
use crate::corpus::AudioBuffer;
use crate::error::{Error, Result};

/// Absolute threshold on the normalised difference function.
pub const YIN_THRESHOLD: f64 = 0.15;
/// Frames with confidence at or above this value are voiced.
pub const VOICING_THRESHOLD: f64 = 1.0 - YIN_THRESHOLD;

const SILENCE_ENERGY: f64 = 1e-10;

pub fn estimate_f0(
    buffer: &AudioBuffer,
    frame_rate_hz: f64,
    f0_range_hz: (f64, f64),
) -> Result<(ControlTrack, ControlTrack)> {
    let rate = buffer.sample_rate_hz as f64;
    let (lo, hi) = f0_range_hz;
    if !(lo > 20.0 && lo < hi && hi < rate / 2.0) {
        return Err(Error::invalid(format!(
            "f0 range [{lo}, {hi}] must lie within (20, {})",
            rate / 2.0
        )));
    }
    let hop = hop_for(buffer.sample_rate_hz, frame_rate_hz)?;
    let tau_min = ((rate / hi).floor() as usize).max(2);
    let tau_max = (rate / lo).ceil() as usize;
    let width = tau_max;
    let frame_len = width + tau_max + 2;
    let n_fft = next_pow2(frame_len);
    let n_frames = frame_count(buffer.len().max(1), hop);
    if buffer.is_empty() {
        return Ok((
            ControlTrack::new(vec![0.0], frame_rate_hz, ControlKind::F0Hz),
            ControlTrack::new(vec![0.0], frame_rate_hz, ControlKind::Confidence),
        ));
    }
    let fft = ComplexFft::new(n_fft);
    let chunk = 64;
    let parts: Vec<Vec<(f64, f64)>> = crate::exec::map_range(n_frames.div_ceil(chunk), |ci| {
        let mut frame = vec![0.0; frame_len];
        let mut a = vec![Complex64::default(); n_fft];
        let mut b = vec![Complex64::default(); n_fft];
        let mut scratch =
            vec![Complex64::default(); fft.forward.get_inplace_scratch_len().max(fft.inverse.get_inplace_scratch_len())];
        let mut cmnd = vec![1.0; tau_max + 2];
        let mut out = Vec::with_capacity(chunk);
        for i in ci * chunk..((ci + 1) * chunk).min(n_frames) {
            let start = (i * hop) as isize - (frame_len / 2) as isize;
            reflected_frame(&buffer.samples, start, &mut frame);
            out.push(analyse_frame(
                &frame, width, tau_min, tau_max, rate, &fft, &mut a, &mut b, &mut scratch, &mut cmnd,
            ));
        }
        out
    });
    let (f0, conf): (Vec<f64>, Vec<f64>) = parts.into_iter().flatten().unzip();
    Ok((
        ControlTrack::new(f0, frame_rate_hz, ControlKind::F0Hz),
        ControlTrack::new(conf, frame_rate_hz, ControlKind::Confidence),
    ))
}

#[allow(clippy::too_many_arguments)]
fn analyse_frame(
    frame: &[f64],
    width: usize,
    tau_min: usize,
    tau_max: usize,
    rate: f64,
    fft: &ComplexFft,
    a: &mut [Complex64],
    b: &mut [Complex64],
    scratch: &mut [Complex64],
    cmnd: &mut [f64],
) -> (f64, f64) {
    let energy0: f64 = frame[..width].iter().map(|x| x * x).sum();
    if energy0 < SILENCE_ENERGY {
        return (0.0, 0.0);
    }
    for (k, v) in a.iter_mut().enumerate() {
        *v = Complex64::new(frame.get(k).copied().unwrap_or(0.0), 0.0);
    }
    for (k, v) in b.iter_mut().enumerate() {
        *v = Complex64::new(if k < width { frame[k] } else { 0.0 }, 0.0);
    }
    fft.forward.process_with_scratch(a, scratch);
    fft.forward.process_with_scratch(b, scratch);
    for (x, y) in a.iter_mut().zip(b.iter()) {
        *x *= y.conj();
    }
    fft.inverse.process_with_scratch(a, scratch);
    let norm = 1.0 / a.len() as f64;

    // Running energy of the lagged window.
    let mut energy_tau = energy0;
    let mut cum = 0.0;
    cmnd[0] = 1.0;
    for tau in 1..=tau_max + 1 {
        energy_tau += frame[tau + width - 1].powi(2) - frame[tau - 1].powi(2);
        let r = a[tau].re * norm;
        let d = (energy0 + energy_tau - 2.0 * r).max(0.0);
        cum += d;
        cmnd[tau] = if cum > 0.0 { d * tau as f64 / cum } else { 1.0 };
    }

    let mut best = None;
    let mut tau = tau_min;
    while tau <= tau_max {
        if cmnd[tau] < YIN_THRESHOLD {
            while tau < tau_max && cmnd[tau + 1] < cmnd[tau] {
                tau += 1;
            }
            best = Some(tau);
            break;
        }
        tau += 1;
    }
    match best {
        Some(t) => {
            let refined = if t > 1 && t < tau_max + 1 {
                let (y0, y1, y2) = (cmnd[t - 1], cmnd[t], cmnd[t + 1]);
                let den = y0 - 2.0 * y1 + y2;
                if den.abs() > 1e-12 {
                    t as f64 + (0.5 * (y0 - y2) / den).clamp(-1.0, 1.0)
                } else {
                    t as f64
                }
            } else {
                t as f64
            };
            (rate / refined, (1.0 - cmnd[t]).clamp(0.0, 1.0))
        }
        None => {
            let min = cmnd[tau_min..=tau_max].iter().cloned().fold(f64::INFINITY, f64::min);
            // Keep unvoiced confidence strictly below the voicing threshold.
            let c = (1.0 - min).clamp(0.0, 1.0).min(VOICING_THRESHOLD - 1e-9);
            (0.0, c)
        }
    }
}
