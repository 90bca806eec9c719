use std::f64::consts::PI;

use crate::corpus::AudioBuffer;
use crate::error::{Error, Result};

pub const MIN_RATE_HZ: u32 = 4_000;
pub const MAX_RATE_HZ: u32 = 192_000;

const ZERO_CROSSINGS: f64 = 32.0;
const ROLLOFF: f64 = 0.92;
const KAISER_BETA: f64 = 8.6;
const MAX_TABLE_PHASES: u64 = 2048;

fn gcd(a: u64, b: u64) -> u64 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// Zeroth-order modified Bessel function of the first kind.
fn bessel_i0(x: f64) -> f64 {
    let mut sum = 1.0;
    let mut term = 1.0;
    let q = x * x / 4.0;
    for k in 1..64 {
        term *= q / (k * k) as f64;
        sum += term;
        if term < sum * 1e-17 {
            break;
        }
    }
    sum
}

struct Kernel {
    cutoff: f64,
    half_width: f64,
    norm: f64,
}

impl Kernel {
    /// Kaiser-windowed sinc, `t` in input samples.
    fn eval(&self, t: f64) -> f64 {
        if t.abs() >= self.half_width {
            return 0.0;
        }
        let x = 2.0 * self.cutoff * t;
        let sinc = if x.abs() < 1e-12 {
            1.0
        } else {
            (PI * x).sin() / (PI * x)
        };
        let r = t / self.half_width;
        let w = bessel_i0(KAISER_BETA * (1.0 - r * r).max(0.0).sqrt()) * self.norm;
        2.0 * self.cutoff * sinc * w
    }
}

/// Band-limited rational resampler (Kaiser-windowed sinc, polyphase table).
///
/// Identical source and target rates return the input unchanged. The output
/// has `ceil(len * target / source)` samples.
pub fn resample(buffer: &AudioBuffer, target_rate_hz: u32) -> Result<AudioBuffer> {
    if target_rate_hz == 0 || buffer.sample_rate_hz == 0 {
        return Err(Error::invalid("sample rates must be positive"));
    }
    if buffer.sample_rate_hz == target_rate_hz {
        return Ok(buffer.clone());
    }
    if !(MIN_RATE_HZ..=MAX_RATE_HZ).contains(&target_rate_hz) {
        return Err(Error::invalid(format!(
            "target rate {target_rate_hz} Hz outside [{MIN_RATE_HZ}, {MAX_RATE_HZ}]"
        )));
    }
    let src = buffer.sample_rate_hz as u64;
    let dst = target_rate_hz as u64;
    let g = gcd(src, dst);
    let up = dst / g;
    let down = src / g;

    // Cutoff in cycles per input sample.
    let cutoff = 0.5 * (dst.min(src) as f64 / src as f64) * ROLLOFF;
    let half_width = ZERO_CROSSINGS / (2.0 * cutoff);
    let kernel = Kernel {
        cutoff,
        half_width,
        norm: 1.0 / bessel_i0(KAISER_BETA),
    };
    let reach = half_width.ceil() as isize;
    let taps = (2 * reach + 1) as usize;

    let table: Option<Vec<f64>> = (up <= MAX_TABLE_PHASES).then(|| {
        let mut t = Vec::with_capacity(up as usize * taps);
        for p in 0..up {
            let frac = p as f64 / up as f64;
            for k in -reach..=reach {
                t.push(kernel.eval(frac - k as f64));
            }
        }
        t
    });

    let n_in = buffer.samples.len();
    let n_out = ((n_in as u64 * up).div_ceil(down)) as usize;
    let x = &buffer.samples;
    let samples: Vec<f32> = crate::exec::map_range(n_out, |n| {
        let pos = n as u64 * down;
        let base = (pos / up) as isize;
        let phase = pos % up;
        let frac = phase as f64 / up as f64;
        let mut acc = 0.0;
        for (ki, k) in (-reach..=reach).enumerate() {
            let j = base + k;
            if j < 0 || j as usize >= n_in {
                continue;
            }
            let w = match &table {
                Some(t) => t[phase as usize * taps + ki],
                None => kernel.eval(frac - k as f64),
            };
            acc += w * x[j as usize] as f64;
        }
        acc as f32
    });
    Ok(AudioBuffer::new(samples, target_rate_hz))
}
