use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::augmentor::AugmentationPolicy;
use crate::classifier::ClassifierConfig;
use crate::emotionmap::MultiQuadrantPolicy;
use crate::error::{Error, Result};
use crate::generators::{GeneratorProfile, HnConfig, TieredConfig};

use super::compare::HighlightMode;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LabelTask {
    #[default]
    MoodTheme,
    Emotional,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorpusConfig {
    pub train: PathBuf,
    pub validation: PathBuf,
    pub test: PathBuf,
    #[serde(default)]
    pub task: LabelTask,
    /// Tag-to-quadrant table for the emotional task; the shipped table when
    /// absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mapping: Option<PathBuf>,
    #[serde(default)]
    pub multi_quadrant: MultiQuadrantPolicy,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GeneratorKind {
    #[default]
    HarmonicNoise,
    Tiered,
    External,
    /// Synthetic-corpus class-conditional sampler.
    Matched,
    WhiteNoise,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GeneratorConfig {
    pub kind: GeneratorKind,
    /// Overrides the kind's preset profile.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub profile: Option<GeneratorProfile>,
    /// Trained model to load instead of training one.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub checkpoint: Option<PathBuf>,
    /// `<class>/<sample>.wav` tree for the external kind.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub external_dir: Option<PathBuf>,
    pub temperature: f64,
    pub hn: HnConfig,
    pub tiered: TieredConfig,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        GeneratorConfig {
            kind: GeneratorKind::default(),
            profile: None,
            checkpoint: None,
            external_dir: None,
            temperature: 1.0,
            hn: HnConfig::default(),
            tiered: TieredConfig::default(),
        }
    }
}

impl GeneratorConfig {
    pub fn resolved_profile(&self, working_rate_hz: u32) -> GeneratorProfile {
        if let Some(p) = &self.profile {
            return p.clone();
        }
        match self.kind {
            GeneratorKind::HarmonicNoise => GeneratorProfile {
                sample_rate_hz: self.hn.sample_rate_hz,
                ..GeneratorProfile::harmonic_noise()
            },
            GeneratorKind::Tiered => GeneratorProfile {
                sample_rate_hz: self.tiered.sample_rate_hz,
                ..GeneratorProfile::tiered()
            },
            GeneratorKind::External => GeneratorProfile::external(),
            GeneratorKind::Matched => super::synthetic::MatchedGenerator::new(1, 4.0, working_rate_hz).profile,
            GeneratorKind::WhiteNoise => super::synthetic::NoiseGenerator::new(4.0, working_rate_hz).profile,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub trials: usize,
    pub seeds: Vec<u64>,
    pub output_dir: PathBuf,
    pub highlight: HighlightMode,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            trials: 2,
            seeds: vec![0, 1],
            output_dir: PathBuf::from("runs"),
            highlight: HighlightMode::Relative,
        }
    }
}

/// Whole-experiment configuration, one TOML section per module.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub experiment: RunConfig,
    pub corpus: CorpusConfig,
    #[serde(default)]
    pub classifier: ClassifierConfig,
    #[serde(default)]
    pub policy: AugmentationPolicy,
    #[serde(default)]
    pub generator: GeneratorConfig,
}

fn resolve(base: &Path, p: &mut PathBuf) {
    if p.is_relative() {
        *p = base.join(&*p);
    }
}

impl ExperimentConfig {
    /// Parses TOML; relative paths are resolved against `base_dir`.
    pub fn from_toml_str(text: &str, base_dir: &Path) -> Result<Self> {
        let mut cfg: ExperimentConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        resolve(base_dir, &mut cfg.corpus.train);
        resolve(base_dir, &mut cfg.corpus.validation);
        resolve(base_dir, &mut cfg.corpus.test);
        resolve(base_dir, &mut cfg.experiment.output_dir);
        for p in [&mut cfg.corpus.mapping, &mut cfg.generator.checkpoint, &mut cfg.generator.external_dir]
            .into_iter()
            .flatten()
        {
            resolve(base_dir, p);
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text, path.parent().unwrap_or(Path::new(".")))
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_toml()?).map_err(|e| Error::io(path, e))
    }

    pub fn validate(&self) -> Result<()> {
        let run = &self.experiment;
        if run.trials == 0 {
            return Err(Error::Config("trials must be positive".into()));
        }
        if run.seeds.len() != run.trials {
            return Err(Error::Config(format!(
                "{} seeds listed for {} trials",
                run.seeds.len(),
                run.trials
            )));
        }
        for (name, p) in [
            ("corpus.train", &self.corpus.train),
            ("corpus.validation", &self.corpus.validation),
            ("corpus.test", &self.corpus.test),
        ] {
            if !p.is_file() {
                return Err(Error::Config(format!("{name}: {} does not exist", p.display())));
            }
        }
        if let Some(m) = &self.corpus.mapping {
            if !m.is_file() {
                return Err(Error::Config(format!("corpus.mapping: {} does not exist", m.display())));
            }
        }
        if let Some(c) = &self.generator.checkpoint {
            if !c.is_file() {
                return Err(Error::Config(format!("generator.checkpoint: {} does not exist", c.display())));
            }
        }
        if self.generator.kind == GeneratorKind::External {
            match &self.generator.external_dir {
                Some(d) if d.is_dir() => {}
                _ => return Err(Error::Config("generator.external_dir must name an existing directory".into())),
            }
        }
        if !(self.generator.temperature >= 0.0) {
            return Err(Error::Config("generator.temperature must be non-negative".into()));
        }
        self.policy.validate()?;
        self.generator.hn.validate()?;
        self.generator.tiered.validate()?;
        self.generator.resolved_profile(self.classifier.mel.sample_rate_hz).validate()?;
        let mut c = self.classifier.clone();
        c.num_classes = c.num_classes.max(1);
        c.validate()
    }
}
