//! 8-bit mu-law companding.

use crate::error::{Error, Result};

pub const MU: f64 = 255.0;
pub const LEVELS: usize = 256;

pub fn encode_sample(x: f64) -> u8 {
    let y = x.signum() * (1.0 + MU * x.abs()).ln() / (1.0 + MU).ln();
    ((y + 1.0) / 2.0 * MU).round().clamp(0.0, MU) as u8
}

pub fn decode_sample(q: u8) -> f64 {
    let y = 2.0 * q as f64 / MU - 1.0;
    y.signum() * ((1.0 + MU).powf(y.abs()) - 1.0) / MU
}

pub fn mu_law_encode(samples: &[f32]) -> Result<Vec<u8>> {
    samples
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            if !(-1.0..=1.0).contains(&x) {
                Err(Error::invalid(format!("sample {i} = {x} outside [-1, 1]")))
            } else {
                Ok(encode_sample(x as f64))
            }
        })
        .collect()
}

pub fn mu_law_decode(symbols: &[u8]) -> Vec<f32> {
    symbols.iter().map(|&q| decode_sample(q) as f32).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_and_endpoints() {
        let q = encode_sample(0.0);
        assert!(q == 127 || q == 128);
        assert!(decode_sample(q).abs() <= 1.0 / 255.0);
        assert_eq!(encode_sample(1.0), 255);
        assert_eq!(encode_sample(-1.0), 0);
        assert!((decode_sample(255) - 1.0).abs() < 1e-6);
        assert!((decode_sample(0) + 1.0).abs() < 1e-6);
    }

    #[test]
    fn roundtrip_error_bounded_on_grid() {
        let n = 100_000;
        let worst = (0..n)
            .map(|i| -1.0 + 2.0 * i as f64 / (n - 1) as f64)
            .map(|x| (decode_sample(encode_sample(x)) - x).abs())
            .fold(0.0, f64::max);
        // Half a quantisation step times the expansion slope at |x| = 1.
        let bound = 0.5 * (2.0 / 255.0) * (1.0 + MU) * (1.0 + MU).ln() / MU;
        assert!(worst <= bound + 1e-12 && worst <= 0.025, "{worst}");
    }

    #[test]
    fn rejects_out_of_range() {
        assert!(mu_law_encode(&[0.5, 1.5]).is_err());
        assert_eq!(mu_law_decode(&mu_law_encode(&[1.0, -1.0]).unwrap()), vec![1.0, -1.0]);
    }
}
