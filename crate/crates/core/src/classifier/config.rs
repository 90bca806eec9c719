use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::MelConfig;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ClassifierConfig {
    pub num_classes: usize,
    /// Channels of the backbone.
    pub backbone_width: usize,
    /// Inverted-residual expansion factor.
    pub expansion: usize,
    pub num_conv_blocks: usize,
    pub attention_heads: usize,
    pub window_s: f64,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    /// Random windows drawn per training track per epoch.
    pub windows_per_track: usize,
    pub grad_clip: f64,
    pub seed: u64,
    pub mel: MelConfig,
}

impl Default for ClassifierConfig {
    fn default() -> Self {
        ClassifierConfig {
            num_classes: 56,
            backbone_width: 32,
            expansion: 2,
            num_conv_blocks: 3,
            attention_heads: 2,
            window_s: 10.0,
            learning_rate: 1e-3,
            batch_size: 16,
            max_epochs: 30,
            patience: 5,
            windows_per_track: 1,
            grad_clip: 5.0,
            seed: 0,
            mel: MelConfig::default(),
        }
    }
}

impl ClassifierConfig {
    pub fn window_frames(&self) -> usize {
        (self.window_s * self.mel.frame_rate_hz()).round() as usize
    }

    pub fn validate(&self) -> Result<()> {
        self.mel.validate()?;
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if self.num_classes == 0 {
            return bad("num_classes must be positive");
        }
        if self.backbone_width == 0 || self.expansion == 0 || self.num_conv_blocks == 0 {
            return bad("backbone_width, expansion and num_conv_blocks must be positive");
        }
        if self.attention_heads == 0 || self.backbone_width % self.attention_heads != 0 {
            return bad("attention_heads must divide backbone_width");
        }
        if self.window_frames() < 8 {
            return Err(Error::Config(format!(
                "window of {} s gives {} frames; need at least 8",
                self.window_s,
                self.window_frames()
            )));
        }
        if self.patience >= self.max_epochs {
            return bad("patience must be smaller than max_epochs");
        }
        if !(self.learning_rate > 0.0) || self.batch_size == 0 || self.windows_per_track == 0 {
            return bad("learning_rate, batch_size and windows_per_track must be positive");
        }
        Ok(())
    }
}
