//! Framing and FFT helpers shared by the feature extractors and the
//! spectral losses.

use std::f64::consts::PI;
use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

/// Periodic Hann window.
pub fn hann(n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| 0.5 - 0.5 * (2.0 * PI * i as f64 / n as f64).cos())
        .collect()
}

/// Number of centered frames: `ceil(len / hop)`, at least one.
pub fn frame_count(len: usize, hop: usize) -> usize {
    len.div_ceil(hop).max(1)
}

/// Mirror-reflects an out-of-range index back into `0..len`.
#[inline]
pub fn reflect_index(i: isize, len: usize) -> usize {
    if len == 1 {
        return 0;
    }
    let period = 2 * (len as isize - 1);
    let mut j = i.rem_euclid(period);
    if j >= len as isize {
        j = period - j;
    }
    j as usize
}

/// Copies `out.len()` samples starting at `start`, reflecting at the edges.
pub fn reflected_frame(samples: &[f32], start: isize, out: &mut [f64]) {
    let n = samples.len();
    for (k, o) in out.iter_mut().enumerate() {
        let i = start + k as isize;
        *o = if i >= 0 && (i as usize) < n {
            samples[i as usize] as f64
        } else {
            samples[reflect_index(i, n)] as f64
        };
    }
}

/// Reusable forward FFT of a fixed real length.
pub struct RealFft {
    n: usize,
    fft: Arc<dyn Fft<f64>>,
    buf: Vec<Complex64>,
    scratch: Vec<Complex64>,
}

impl RealFft {
    pub fn new(n: usize) -> Self {
        let fft = FftPlanner::new().plan_fft_forward(n);
        let scratch = vec![Complex64::default(); fft.get_inplace_scratch_len()];
        RealFft {
            n,
            fft,
            buf: vec![Complex64::default(); n],
            scratch,
        }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    /// Full complex spectrum of `input` (zero-padded to `n`).
    pub fn spectrum(&mut self, input: &[f64]) -> &[Complex64] {
        for (i, b) in self.buf.iter_mut().enumerate() {
            *b = Complex64::new(input.get(i).copied().unwrap_or(0.0), 0.0);
        }
        self.fft
            .process_with_scratch(&mut self.buf, &mut self.scratch);
        &self.buf
    }

    /// One-sided magnitude spectrum (`n / 2 + 1` bins) into `out`.
    pub fn magnitudes(&mut self, input: &[f64], out: &mut [f64]) {
        let n = self.n;
        let spec = self.spectrum(input);
        for (o, c) in out.iter_mut().zip(&spec[..n / 2 + 1]) {
            *o = c.norm();
        }
    }
}

/// Complex FFT pair (forward and unnormalised inverse) of one length.
pub struct ComplexFft {
    pub forward: Arc<dyn Fft<f64>>,
    pub inverse: Arc<dyn Fft<f64>>,
}

impl ComplexFft {
    pub fn new(n: usize) -> Self {
        let mut planner = FftPlanner::new();
        ComplexFft {
            forward: planner.plan_fft_forward(n),
            inverse: planner.plan_fft_inverse(n),
        }
    }
}

pub fn next_pow2(n: usize) -> usize {
    n.max(1).next_power_of_two()
}

/// 64-bit FNV-1a; used to fingerprint extraction parameters.
pub fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf29ce484222325;
    for b in bytes {
        h ^= *b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    h
}
