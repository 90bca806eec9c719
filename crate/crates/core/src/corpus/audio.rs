use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::resample;

/// Mono waveform with samples in `[-1, 1]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AudioBuffer {
    pub samples: Vec<f32>,
    pub sample_rate_hz: u32,
}

impl AudioBuffer {
    pub fn new(samples: Vec<f32>, sample_rate_hz: u32) -> Self {
        AudioBuffer {
            samples,
            sample_rate_hz,
        }
    }

    pub fn silence(len: usize, sample_rate_hz: u32) -> Self {
        AudioBuffer::new(vec![0.0; len], sample_rate_hz)
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_s(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate_hz as f64
    }

    pub fn peak(&self) -> f32 {
        self.samples.iter().fold(0.0f32, |m, x| m.max(x.abs()))
    }

    /// Rescales so the peak is 1.0 when any sample exceeds full scale.
    pub fn normalize_if_clipping(&mut self) {
        let peak = self.peak();
        if peak > 1.0 {
            let g = 1.0 / peak;
            for s in &mut self.samples {
                *s *= g;
            }
        }
    }

    /// Hard-clips to `[-1, 1]` and returns the clipped fraction.
    pub fn hard_clip(&mut self) -> f64 {
        if self.samples.is_empty() {
            return 0.0;
        }
        let mut n = 0usize;
        for s in &mut self.samples {
            if !s.is_finite() {
                *s = 0.0;
                n += 1;
            } else if s.abs() > 1.0 {
                *s = s.clamp(-1.0, 1.0);
                n += 1;
            }
        }
        n as f64 / self.samples.len() as f64
    }

    /// Sub-range `[start, start + len)` clamped to the buffer.
    pub fn excerpt(&self, start: usize, len: usize) -> AudioBuffer {
        let s = start.min(self.len());
        let e = (start + len).min(self.len());
        AudioBuffer::new(self.samples[s..e].to_vec(), self.sample_rate_hz)
    }
}

/// Decoded multichannel audio before downmixing.
pub struct DecodedAudio {
    pub channels: Vec<Vec<f32>>,
    pub sample_rate_hz: u32,
}

/// Hook for codecs beyond PCM WAV.
pub trait AudioDecoder: Send + Sync {
    fn decode(&self, path: &Path) -> Result<DecodedAudio>;
}

/// 16/24/32-bit integer and 32-bit float WAV reader.
#[derive(Clone, Copy, Debug, Default)]
pub struct WavDecoder;

impl AudioDecoder for WavDecoder {
    fn decode(&self, path: &Path) -> Result<DecodedAudio> {
        let decode_err = |e: hound::Error| Error::Decode {
            path: path.to_path_buf(),
            message: e.to_string(),
        };
        let mut reader = hound::WavReader::open(path).map_err(decode_err)?;
        let spec = reader.spec();
        let n_ch = spec.channels.max(1) as usize;
        let interleaved: Vec<f32> = match spec.sample_format {
            hound::SampleFormat::Float => reader
                .samples::<f32>()
                .collect::<std::result::Result<_, _>>()
                .map_err(decode_err)?,
            hound::SampleFormat::Int => {
                let scale = 1.0 / (1u64 << (spec.bits_per_sample - 1)) as f32;
                reader
                    .samples::<i32>()
                    .map(|s| s.map(|v| v as f32 * scale))
                    .collect::<std::result::Result<_, _>>()
                    .map_err(decode_err)?
            }
        };
        let frames = interleaved.len() / n_ch;
        let mut channels = vec![Vec::with_capacity(frames); n_ch];
        for frame in interleaved.chunks_exact(n_ch) {
            for (c, &s) in frame.iter().enumerate() {
                channels[c].push(s);
            }
        }
        Ok(DecodedAudio {
            channels,
            sample_rate_hz: spec.sample_rate,
        })
    }
}

/// Decodes a WAV file to a mono buffer at `target_rate_hz`.
pub fn load_audio(path: &Path, target_rate_hz: u32) -> Result<AudioBuffer> {
    load_audio_with(&WavDecoder, path, target_rate_hz)
}

pub fn load_audio_with(decoder: &dyn AudioDecoder, path: &Path, target_rate_hz: u32) -> Result<AudioBuffer> {
    let decoded = decoder.decode(path)?;
    let frames = decoded.channels.first().map_or(0, Vec::len);
    if frames == 0 {
        return Err(Error::Decode {
            path: path.to_path_buf(),
            message: "zero-length audio".into(),
        });
    }
    let n_ch = decoded.channels.len() as f32;
    let mono: Vec<f32> = (0..frames)
        .map(|i| decoded.channels.iter().map(|c| c[i]).sum::<f32>() / n_ch)
        .collect();
    if mono.iter().any(|s| !s.is_finite()) {
        return Err(Error::Decode {
            path: path.to_path_buf(),
            message: "non-finite samples".into(),
        });
    }
    let buf = AudioBuffer::new(mono, decoded.sample_rate_hz);
    let mut out = resample(&buf, target_rate_hz)?;
    out.normalize_if_clipping();
    Ok(out)
}

/// Writes 16-bit PCM mono WAV; samples are clamped to full scale.
pub fn write_wav(path: &Path, buffer: &AudioBuffer) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate: buffer.sample_rate_hz,
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    };
    let to_err = |e: hound::Error| Error::Decode {
        path: path.to_path_buf(),
        message: e.to_string(),
    };
    let mut w = hound::WavWriter::create(path, spec).map_err(to_err)?;
    for &s in &buffer.samples {
        let v = (s.clamp(-1.0, 1.0) * 32767.0).round() as i16;
        w.write_sample(v).map_err(to_err)?;
    }
    w.finalize().map_err(to_err)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write_raw(path: &Path, channels: u16, rate: u32, bits: u16, frames: &[Vec<f64>]) {
        let spec = hound::WavSpec {
            channels,
            sample_rate: rate,
            bits_per_sample: bits,
            sample_format: hound::SampleFormat::Int,
        };
        let mut w = hound::WavWriter::create(path, spec).unwrap();
        let full = ((1i64 << (bits - 1)) - 1) as f64;
        for f in frames {
            for &s in f {
                w.write_sample((s * full).round() as i32).unwrap();
            }
        }
        w.finalize().unwrap();
    }

    #[test]
    fn stereo_downmix_and_resample_length() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("s.wav");
        let frames: Vec<Vec<f64>> = (0..44100)
            .map(|i| {
                let x = (i as f64 * 0.01).sin() * 0.5;
                vec![x, x]
            })
            .collect();
        write_raw(&p, 2, 44100, 16, &frames);
        let buf = load_audio(&p, 16000).unwrap();
        assert_eq!(buf.len(), 16000);
        assert_eq!(buf.sample_rate_hz, 16000);
    }

    #[test]
    fn channel_mean_is_exact_without_resampling() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.wav");
        write_raw(&p, 2, 16000, 24, &[vec![0.5, -0.25], vec![0.0, 1.0 / 3.0]]);
        let buf = load_audio(&p, 16000).unwrap();
        assert!((buf.samples[0] - 0.125).abs() < 1e-6);
        assert!((buf.samples[1] - 1.0 / 6.0).abs() < 1e-6);
    }

    #[test]
    fn silence_is_not_normalized() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("z.wav");
        write_raw(&p, 1, 16000, 16, &vec![vec![0.0]; 800]);
        let buf = load_audio(&p, 16000).unwrap();
        assert!(buf.samples.iter().all(|s| *s == 0.0));
    }

    #[test]
    fn over_full_scale_float_input_is_peak_normalized() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("f.wav");
        let spec = hound::WavSpec {
            channels: 1,
            sample_rate: 16000,
            bits_per_sample: 32,
            sample_format: hound::SampleFormat::Float,
        };
        let mut w = hound::WavWriter::create(&p, spec).unwrap();
        for i in 0..32000 {
            w.write_sample((1.5 * (2.0 * std::f64::consts::PI * 220.0 * i as f64 / 16000.0).sin()) as f32)
                .unwrap();
        }
        w.finalize().unwrap();
        let buf = load_audio(&p, 16000).unwrap();
        let max = buf.samples.iter().fold(0.0f32, |m, s| m.max(s.abs()));
        assert!((max - 1.0).abs() < 1e-6);
    }

    #[test]
    fn zero_length_and_corrupt_files_fail() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("e.wav");
        write_raw(&p, 1, 16000, 16, &[]);
        assert!(matches!(load_audio(&p, 16000), Err(Error::Decode { .. })));
        let q = dir.path().join("c.wav");
        std::fs::write(&q, b"not a wav file").unwrap();
        assert!(matches!(load_audio(&q, 16000), Err(Error::Decode { .. })));
    }

    #[test]
    fn wav_write_read_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("r.wav");
        let buf = AudioBuffer::new(vec![0.0, 0.5, -0.5, 1.0], 16000);
        write_wav(&p, &buf).unwrap();
        let back = load_audio(&p, 16000).unwrap();
        for (a, b) in buf.samples.iter().zip(&back.samples) {
            assert!((a - b).abs() < 1.0 / 32000.0);
        }
    }
}
