//! Class-conditional generators: a common request/sample interface, a
//! harmonic-plus-noise reconstructor, a tiered autoregressive sampler and an
//! adapter for pre-generated external audio.

mod external;
pub mod hn;
pub mod mulaw;
pub mod spectral;
pub mod synth;
pub mod tiered;

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::corpus::{write_wav, AudioBuffer, LabelVocabulary};
use crate::error::{Error, Result};

pub use external::{external_scan, ExternalGenerator};
pub use hn::{hn_reconstruct, hn_train, HnConfig, HnGenerator, HnModel};
pub use mulaw::{mu_law_decode, mu_law_encode};
pub use spectral::{multiscale_spectral_loss, SpectralLoss};
pub use synth::{harmonic_synth, noise_synth, NoiseBasis, SynthControls};
pub use tiered::{tiered_continue, tiered_train, TieredConfig, TieredGenerator, TieredModel};

/// Samples whose clipped fraction exceeds this are flagged.
pub const CLIP_FLAG_FRACTION: f64 = 0.05;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GeneratorMode {
    Primed,
    Reconstruction,
    External,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeneratorProfile {
    pub name: String,
    pub mode: GeneratorMode,
    pub sample_length_s: f64,
    pub prime_length_s: f64,
    pub sample_rate_hz: u32,
}

impl GeneratorProfile {
    pub fn tiered() -> Self {
        GeneratorProfile {
            name: "samplernn".into(),
            mode: GeneratorMode::Primed,
            sample_length_s: 10.0,
            prime_length_s: 4.0,
            sample_rate_hz: 16_000,
        }
    }

    pub fn harmonic_noise() -> Self {
        GeneratorProfile {
            name: "ddsp".into(),
            mode: GeneratorMode::Reconstruction,
            sample_length_s: 4.0,
            prime_length_s: 0.0,
            sample_rate_hz: 16_000,
        }
    }

    pub fn external() -> Self {
        GeneratorProfile {
            name: "jukebox".into(),
            mode: GeneratorMode::External,
            sample_length_s: 24.0,
            prime_length_s: 8.0,
            sample_rate_hz: 44_100,
        }
    }

    pub fn sample_len(&self) -> usize {
        (self.sample_length_s * self.sample_rate_hz as f64).round() as usize
    }

    pub fn prime_len(&self) -> usize {
        (self.prime_length_s * self.sample_rate_hz as f64).round() as usize
    }

    /// Source excerpt length a request must carry.
    pub fn source_len(&self) -> usize {
        match self.mode {
            GeneratorMode::Primed => self.prime_len(),
            GeneratorMode::Reconstruction => self.sample_len(),
            GeneratorMode::External => 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sample_length_s > 0.0) || self.sample_rate_hz == 0 {
            return Err(Error::Config(format!("profile `{}`: sample length and rate must be positive", self.name)));
        }
        if self.mode == GeneratorMode::Primed && !(self.prime_length_s > 0.0 && self.prime_length_s < self.sample_length_s) {
            return Err(Error::Config(format!(
                "profile `{}`: prime length must lie in (0, sample length)",
                self.name
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GenerationRequest {
    pub target_class: usize,
    /// Prime (primed mode) or source excerpt (reconstruction mode).
    pub source: Option<AudioBuffer>,
    pub source_id: Option<String>,
    pub requested_length_s: f64,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub generator: String,
    pub source_id: Option<String>,
    pub seed: u64,
    pub mode: GeneratorMode,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GeneratedSample {
    pub audio: AudioBuffer,
    pub inherited_label: usize,
    pub provenance: Provenance,
    /// Fraction of samples hard-clipped to [-1, 1].
    pub clip_fraction: f64,
    pub flags: Vec<String>,
}

impl GeneratedSample {
    /// Clips, records the clip fraction and flags heavy clipping.
    pub fn finish(mut audio: AudioBuffer, label: usize, provenance: Provenance, mut flags: Vec<String>) -> Self {
        for s in audio.samples.iter_mut() {
            if !s.is_finite() {
                *s = 0.0;
            }
        }
        let clip_fraction = audio.hard_clip();
        if clip_fraction > CLIP_FLAG_FRACTION {
            flags.push("clipping".into());
        }
        GeneratedSample {
            audio,
            inherited_label: label,
            provenance,
            clip_fraction,
            flags,
        }
    }
}

/// A class-conditional generator.
pub trait Generator: Sync {
    fn profile(&self) -> &GeneratorProfile;

    /// Deterministic given `request.seed`.
    fn generate(&self, request: &GenerationRequest) -> Result<GeneratedSample>;
}

pub(crate) fn generation_error(profile: &GeneratorProfile, req: &GenerationRequest, message: impl Into<String>) -> Error {
    Error::Generation {
        generator: profile.name.clone(),
        source_id: req.source_id.clone(),
        seed: req.seed,
        message: message.into(),
    }
}

/// Checks the request against the profile and returns the source audio.
pub(crate) fn checked_source<'a>(profile: &GeneratorProfile, req: &'a GenerationRequest) -> Result<&'a AudioBuffer> {
    let src = req
        .source
        .as_ref()
        .ok_or_else(|| generation_error(profile, req, "request carries no source audio"))?;
    if src.sample_rate_hz != profile.sample_rate_hz {
        return Err(generation_error(
            profile,
            req,
            format!("source at {} Hz, profile expects {} Hz", src.sample_rate_hz, profile.sample_rate_hz),
        ));
    }
    if src.len() != profile.source_len() {
        return Err(generation_error(
            profile,
            req,
            format!("source has {} samples, profile expects {}", src.len(), profile.source_len()),
        ));
    }
    Ok(src)
}

/// One manifest line.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub path: PathBuf,
    pub class: String,
    pub generator: String,
    pub source_id: Option<String>,
    pub seed: u64,
    pub mode: GeneratorMode,
    pub duration_s: f64,
    pub clip_fraction: f64,
    pub flags: Vec<String>,
}

pub const MANIFEST_FILE: &str = "manifest.jsonl";

/// Writes `<root>/<generator>/<class>/<seed>_<source>.wav` plus a manifest
/// in `<root>/<generator>/`. Returns the manifest entries.
pub fn save_samples(root: &Path, vocabulary: &LabelVocabulary, samples: &[GeneratedSample]) -> Result<Vec<ManifestEntry>> {
    let mut entries = Vec::with_capacity(samples.len());
    let mut manifests: std::collections::BTreeMap<String, Vec<String>> = Default::default();
    for s in samples {
        let class = vocabulary.name(s.inherited_label).to_string();
        let gen = &s.provenance.generator;
        let dir = root.join(gen).join(&class);
        fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        let source = s.provenance.source_id.clone().unwrap_or_else(|| "none".into());
        let safe: String = source
            .chars()
            .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
            .collect();
        let file = dir.join(format!("{}_{}.wav", s.provenance.seed, safe));
        write_wav(&file, &s.audio)?;
        let entry = ManifestEntry {
            path: PathBuf::from(&class).join(file.file_name().expect("file name")),
            class,
            generator: gen.clone(),
            source_id: s.provenance.source_id.clone(),
            seed: s.provenance.seed,
            mode: s.provenance.mode,
            duration_s: s.audio.duration_s(),
            clip_fraction: s.clip_fraction,
            flags: s.flags.clone(),
        };
        manifests.entry(gen.clone()).or_default().push(serde_json::to_string(&entry)?);
        entries.push(entry);
    }
    for (gen, lines) in manifests {
        let path = root.join(gen).join(MANIFEST_FILE);
        let mut f = fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
        for l in lines {
            writeln!(f, "{l}").map_err(|e| Error::io(&path, e))?;
        }
    }
    Ok(entries)
}
