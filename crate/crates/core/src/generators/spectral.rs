//! Multi-scale spectral loss: for each FFT size, mean L1 between magnitude
//! spectrograms plus mean L1 between their logs (75 % overlap, Hann).

use rustfft::num_complex::Complex64;

use crate::features::frames::{hann, ComplexFft};

pub const FFT_SIZES: [usize; 6] = [2048, 1024, 512, 256, 128, 64];
pub const LOG_EPS: f64 = 1e-5;

struct Scale {
    n: usize,
    hop: usize,
    window: Vec<f64>,
    fft: ComplexFft,
}

fn n_frames(len: usize, n: usize, hop: usize) -> usize {
    if len <= n {
        1
    } else {
        1 + (len - n).div_ceil(hop)
    }
}

impl Scale {
    fn new(n: usize) -> Self {
        Scale {
            n,
            hop: n / 4,
            window: hann(n),
            fft: ComplexFft::new(n),
        }
    }

    /// Complex one-sided spectra of every frame, zero padding past the end.
    fn spectra(&self, x: &[f64]) -> Vec<Vec<Complex64>> {
        let frames = n_frames(x.len(), self.n, self.hop);
        let mut scratch = vec![Complex64::default(); self.fft.forward.get_inplace_scratch_len()];
        (0..frames)
            .map(|f| {
                let start = f * self.hop;
                let mut buf: Vec<Complex64> = (0..self.n)
                    .map(|t| Complex64::new(x.get(start + t).copied().unwrap_or(0.0) * self.window[t], 0.0))
                    .collect();
                self.fft.forward.process_with_scratch(&mut buf, &mut scratch);
                buf.truncate(self.n / 2 + 1);
                buf
            })
            .collect()
    }
}

/// Loss against a fixed target; target magnitudes are computed once.
pub struct SpectralLoss {
    scales: Vec<Scale>,
    target: Vec<Vec<Vec<f64>>>,
    len: usize,
}

impl SpectralLoss {
    pub fn new(target: &[f64]) -> Self {
        Self::with_sizes(target, &FFT_SIZES)
    }

    pub fn with_sizes(target: &[f64], sizes: &[usize]) -> Self {
        let target_len = target.len();
        let scales: Vec<Scale> = sizes.iter().map(|&n| Scale::new(n)).collect();
        let target = scales
            .iter()
            .map(|s| s.spectra(target).iter().map(|f| f.iter().map(|c| c.norm()).collect()).collect())
            .collect();
        SpectralLoss {
            scales,
            target,
            len: target_len,
        }
    }

    pub fn loss(&self, pred: &[f64]) -> f64 {
        self.eval(pred, false).0
    }

    /// Loss and its gradient with respect to every predicted sample.
    pub fn loss_and_grad(&self, pred: &[f64]) -> (f64, Vec<f64>) {
        self.eval(pred, true)
    }

    fn eval(&self, pred: &[f64], want_grad: bool) -> (f64, Vec<f64>) {
        assert_eq!(pred.len(), self.len, "prediction length");
        let mut total = 0.0;
        let mut grad = if want_grad { vec![0.0; pred.len()] } else { Vec::new() };
        for (s, tgt) in self.scales.iter().zip(&self.target) {
            let spec = s.spectra(pred);
            let count = (spec.len() * (s.n / 2 + 1)) as f64;
            let mut scratch = vec![Complex64::default(); s.fft.inverse.get_inplace_scratch_len()];
            let mut z = vec![Complex64::default(); s.n];
            for (f, (frame, tframe)) in spec.iter().zip(tgt).enumerate() {
                z.iter_mut().for_each(|v| *v = Complex64::default());
                for (k, (c, t)) in frame.iter().zip(tframe).enumerate() {
                    let m = c.norm();
                    let dlin = m - t;
                    let dlog = (m + LOG_EPS).ln() - (t + LOG_EPS).ln();
                    total += (dlin.abs() + dlog.abs()) / count;
                    if want_grad && m > 0.0 {
                        let g = (dlin.signum() + dlog.signum() / (m + LOG_EPS)) / count;
                        z[k] = c * (g / m);
                    }
                }
                if want_grad {
                    // d|X_k|/dv_t = Re(conj(X_k) e^{-i w k t}) / |X_k|.
                    s.fft.inverse.process_with_scratch(&mut z, &mut scratch);
                    let start = f * s.hop;
                    for t in 0..s.n {
                        if let Some(gv) = grad.get_mut(start + t) {
                            *gv += z[t].re * s.window[t];
                        }
                    }
                }
            }
        }
        (total, grad)
    }
}

/// One-shot loss between two signals of equal length.
pub fn multiscale_spectral_loss(pred: &[f64], target: &[f64]) -> f64 {
    SpectralLoss::new(target).loss(pred)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn identical_signals_have_zero_loss() {
        let x: Vec<f64> = (0..4000).map(|i| (i as f64 * 0.05).sin()).collect();
        assert_eq!(multiscale_spectral_loss(&x, &x), 0.0);
        assert!(multiscale_spectral_loss(&vec![0.0; 4000], &x) > 1.0);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let target: Vec<f64> = (0..300).map(|_| rng.random_range(-0.5..0.5)).collect();
        let pred: Vec<f64> = (0..300).map(|_| rng.random_range(-0.5..0.5)).collect();
        let loss = SpectralLoss::with_sizes(&target, &[128, 64]);
        let (_, g) = loss.loss_and_grad(&pred);
        let h = 1e-7;
        for _ in 0..30 {
            let i = rng.random_range(0..300);
            let mut p = pred.clone();
            p[i] += h;
            let mut m = pred.clone();
            m[i] -= h;
            let num = (loss.loss(&p) - loss.loss(&m)) / (2.0 * h);
            assert!((num - g[i]).abs() <= 1e-4 * num.abs().max(1e-3), "{i}: {num} vs {}", g[i]);
        }
    }
}
