//! Class-balanced augmentation plans and their execution.

use std::collections::BTreeSet;
use std::fs;
use std::path::Path;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{AudioBuffer, LabelVocabulary, MultiHotLabels, TrackRecord};
use crate::error::{Error, Result};
use crate::features::resample;
use crate::generators::{save_samples, GeneratedSample, GenerationRequest, Generator, GeneratorProfile, ManifestEntry};

pub const PLAN_FILE: &str = "plan.json";
pub const SHORTFALL_FILE: &str = "shortfall.json";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AugmentationPolicy {
    /// Share of the train-split duration spent on generated audio.
    pub budget_fraction: f64,
    pub per_class_equal: bool,
    pub seed: u64,
}

impl Default for AugmentationPolicy {
    fn default() -> Self {
        AugmentationPolicy {
            budget_fraction: 0.05,
            per_class_equal: true,
            seed: 0,
        }
    }
}

impl AugmentationPolicy {
    pub fn validate(&self) -> Result<()> {
        if !(self.budget_fraction > 0.0 && self.budget_fraction <= 1.0) {
            return Err(Error::Config(format!(
                "budget_fraction {} outside (0, 1]",
                self.budget_fraction
            )));
        }
        if !self.per_class_equal {
            return Err(Error::Config("only per-class-equal budgets are supported".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlanEntry {
    pub class: usize,
    /// Track supplying the prime or reconstruction source.
    pub source_id: Option<String>,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AugmentationPlan {
    pub policy: AugmentationPolicy,
    pub profile: GeneratorProfile,
    pub vocabulary: LabelVocabulary,
    pub entries: Vec<PlanEntry>,
    pub train_duration_s: f64,
    pub budget_s: f64,
    pub target_per_class_s: f64,
    pub samples_per_class: usize,
    pub per_class_duration_s: Vec<f64>,
    pub total_duration_s: f64,
}

impl AugmentationPlan {
    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, serde_json::to_string_pretty(self)?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }
}

/// Plans `round(target / sample_length)` samples per class (at least one),
/// with sources drawn without replacement across the whole plan.
pub fn build_plan(
    train_set: &[TrackRecord],
    vocabulary: &LabelVocabulary,
    policy: &AugmentationPolicy,
    profile: &GeneratorProfile,
) -> Result<AugmentationPlan> {
    policy.validate()?;
    profile.validate()?;
    if vocabulary.is_empty() {
        return Err(Error::invalid("empty vocabulary"));
    }
    let n_classes = vocabulary.len();
    let train_duration_s: f64 = train_set.iter().map(|r| r.duration_s).sum();
    let budget_s = policy.budget_fraction * train_duration_s;
    let target = budget_s / n_classes as f64;
    if target <= 0.0 {
        return Err(Error::invalid("augmentation budget is zero"));
    }
    let per_class = ((target / profile.sample_length_s).round() as usize).max(1);

    let mut tracks: Vec<&TrackRecord> = train_set.iter().collect();
    tracks.sort_by(|a, b| a.track_id.cmp(&b.track_id));
    let needs_source = profile.source_len() > 0;
    let min_source_s = if needs_source {
        profile.source_len() as f64 / profile.sample_rate_hz as f64
    } else {
        0.0
    };

    let mut rng = ChaCha8Rng::seed_from_u64(policy.seed);
    let mut used: BTreeSet<&str> = BTreeSet::new();
    let mut entries = Vec::with_capacity(per_class * n_classes);
    for class in 0..n_classes {
        let name = vocabulary.name(class);
        let sources: Vec<Option<String>> = if needs_source {
            let eligible: Vec<&TrackRecord> = tracks
                .iter()
                .copied()
                .filter(|t| t.tags.contains(name) && t.duration_s >= min_source_s && !used.contains(t.track_id.as_str()))
                .collect();
            if eligible.len() < per_class {
                return Err(Error::InsufficientSources {
                    class: name.to_string(),
                    needed: per_class,
                    available: eligible.len(),
                });
            }
            sample(&mut rng, eligible.len(), per_class)
                .into_iter()
                .map(|i| {
                    used.insert(&eligible[i].track_id);
                    Some(eligible[i].track_id.clone())
                })
                .collect()
        } else {
            vec![None; per_class]
        };
        for source_id in sources {
            entries.push(PlanEntry {
                class,
                source_id,
                seed: rng.random(),
            });
        }
    }
    let class_s = per_class as f64 * profile.sample_length_s;
    Ok(AugmentationPlan {
        policy: policy.clone(),
        profile: profile.clone(),
        vocabulary: vocabulary.clone(),
        entries,
        train_duration_s,
        budget_s,
        target_per_class_s: target,
        samples_per_class: per_class,
        per_class_duration_s: vec![class_s; n_classes],
        total_duration_s: class_s * n_classes as f64,
    })
}

/// Supplies source audio for plan entries.
pub trait SourceProvider: Sync {
    fn audio(&self, track_id: &str) -> Result<AudioBuffer>;
}

impl<F: Fn(&str) -> Result<AudioBuffer> + Sync> SourceProvider for F {
    fn audio(&self, track_id: &str) -> Result<AudioBuffer> {
        self(track_id)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ShortfallEntry {
    pub entry: usize,
    pub class: usize,
    pub source_id: Option<String>,
    pub errors: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ShortfallReport {
    pub planned: usize,
    pub failed: Vec<ShortfallEntry>,
}

impl ShortfallReport {
    pub fn fraction(&self) -> f64 {
        if self.planned == 0 {
            0.0
        } else {
            self.failed.len() as f64 / self.planned as f64
        }
    }
}

#[derive(Clone, Debug)]
pub struct Execution {
    /// Generated samples at the working rate, in plan order.
    pub samples: Vec<GeneratedSample>,
    pub shortfall: ShortfallReport,
    pub manifest: Vec<ManifestEntry>,
}

fn retry_seed(seed: u64) -> u64 {
    // splitmix64 step
    let mut z = seed.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn source_excerpt(audio: &AudioBuffer, len: usize, seed: u64) -> Result<AudioBuffer> {
    if audio.len() < len {
        return Err(Error::invalid(format!("source has {} samples, need {len}", audio.len())));
    }
    let start = (seed % (audio.len() - len + 1) as u64) as usize;
    Ok(audio.excerpt(start, len))
}

fn run_entry(plan: &AugmentationPlan, entry: &PlanEntry, generator: &dyn Generator, sources: &dyn SourceProvider, seed: u64) -> Result<GeneratedSample> {
    let profile = &plan.profile;
    let source = match &entry.source_id {
        Some(id) => {
            let a = sources.audio(id)?;
            let a = resample(&a, profile.sample_rate_hz)?;
            Some(source_excerpt(&a, profile.source_len(), seed)?)
        }
        None => None,
    };
    let request = GenerationRequest {
        target_class: entry.class,
        source,
        source_id: entry.source_id.clone(),
        requested_length_s: profile.sample_length_s,
        seed,
    };
    let s = generator.generate(&request)?;
    if s.inherited_label != entry.class {
        return Err(Error::Mismatch(format!(
            "generator labelled a sample {} for planned class {}",
            s.inherited_label, entry.class
        )));
    }
    Ok(s)
}

/// Runs every entry (concurrently), retrying a failure once with a fresh
/// seed. Samples are resampled to `working_rate_hz`; when `out_dir` is
/// given the WAVs, manifest and shortfall report are written there.
pub fn execute_plan(
    plan: &AugmentationPlan,
    generator: &dyn Generator,
    sources: &dyn SourceProvider,
    working_rate_hz: u32,
    out_dir: Option<&Path>,
) -> Result<Execution> {
    if generator.profile() != &plan.profile {
        return Err(Error::Mismatch(format!(
            "generator profile `{}` differs from the plan profile `{}`",
            generator.profile().name,
            plan.profile.name
        )));
    }
    let indexed: Vec<(usize, &PlanEntry)> = plan.entries.iter().enumerate().collect();
    let results = crate::exec::map_slice(&indexed, |&(i, e)| {
        let first = run_entry(plan, e, generator, sources, e.seed);
        let outcome = match first {
            Ok(s) => Ok(s),
            Err(err) => {
                log::warn!("plan entry {i} failed ({err}); retrying with a fresh seed");
                run_entry(plan, e, generator, sources, retry_seed(e.seed)).map_err(|err2| vec![err.to_string(), err2.to_string()])
            }
        };
        outcome.and_then(|mut s| {
            s.audio = resample(&s.audio, working_rate_hz).map_err(|e| vec![e.to_string()])?;
            Ok(s)
        })
    });
    let mut samples = Vec::new();
    let mut failed = Vec::new();
    for ((i, e), r) in indexed.iter().zip(results) {
        match r {
            Ok(s) => samples.push(s),
            Err(errors) => failed.push(ShortfallEntry {
                entry: *i,
                class: e.class,
                source_id: e.source_id.clone(),
                errors,
            }),
        }
    }
    let shortfall = ShortfallReport {
        planned: plan.entries.len(),
        failed,
    };
    if !shortfall.failed.is_empty() {
        log::warn!(
            "{} of {} plan entries failed ({:.1}%)",
            shortfall.failed.len(),
            shortfall.planned,
            100.0 * shortfall.fraction()
        );
    }
    let manifest = match out_dir {
        Some(dir) => {
            fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
            let p = dir.join(SHORTFALL_FILE);
            fs::write(&p, serde_json::to_string_pretty(&shortfall)?).map_err(|e| Error::io(&p, e))?;
            save_samples(dir, &plan.vocabulary, &samples)?
        }
        None => Vec::new(),
    };
    Ok(Execution {
        samples,
        shortfall,
        manifest,
    })
}

/// One training item: id, audio and multi-hot labels.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainItem {
    pub id: String,
    pub audio: AudioBuffer,
    pub labels: MultiHotLabels,
}

/// Original train items followed by the generated samples, each labelled
/// with its target class only.
pub fn augmented_set(train: &[TrainItem], samples: &[GeneratedSample], n_classes: usize) -> Vec<TrainItem> {
    let mut out = train.to_vec();
    for (i, s) in samples.iter().enumerate() {
        out.push(TrainItem {
            id: format!(
                "gen{i}_{}_{}",
                s.provenance.source_id.as_deref().unwrap_or("none"),
                s.provenance.seed
            ),
            audio: s.audio.clone(),
            labels: MultiHotLabels::one_hot(n_classes, s.inherited_label),
        });
    }
    out
}

#[cfg(test)]
mod tests;
