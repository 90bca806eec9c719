//! Deterministic signal processing: resampling, mel spectrograms, loudness
//! and fundamental-frequency tracks.

pub mod cache;
pub mod f0;
pub mod frames;
pub mod loudness;
pub mod mel;
pub mod resample;

use serde::{Deserialize, Serialize};

pub use f0::{estimate_f0, VOICING_THRESHOLD};
pub use loudness::{loudness, LOUDNESS_FLOOR_DB};
pub use mel::{mel_center_frequencies, mel_spectrogram, MelConfig, MelSpectrogram};
pub use resample::resample;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ControlKind {
    F0Hz,
    LoudnessDb,
    Confidence,
}

/// Frame-rate scalar sequence (f0, loudness or voicing confidence).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ControlTrack {
    pub values: Vec<f64>,
    pub frame_rate_hz: f64,
    pub kind: ControlKind,
}

impl ControlTrack {
    pub fn new(values: Vec<f64>, frame_rate_hz: f64, kind: ControlKind) -> Self {
        ControlTrack {
            values,
            frame_rate_hz,
            kind,
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}
