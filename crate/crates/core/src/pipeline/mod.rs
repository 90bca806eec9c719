//! Experiment orchestration: baseline and augmented runs, trial averaging,
//! comparison tables, generated-sample classification and the CLI.

pub mod cli;
mod compare;
mod config;
pub mod plots;
pub mod synthetic;

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::io::Read;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::augmentor::{augmented_set, build_plan, execute_plan, AugmentationPlan, TrainItem, PLAN_FILE};
use crate::classifier::{self, predict, predict_audio, ClassifierConfig, LabeledFeatures, TrackFeatures, TrainedModel};
use crate::corpus::{build_vocabulary, load_audio, load_metadata, LabelVocabulary, MultiHotLabels, Split, TrackRecord};
use crate::emotionmap::{load_mapping, relabel, write_drop_report, DEFAULT_MAPPING_PATH};
use crate::error::{Error, Result};
use crate::features::{cache, frames::fnv1a, resample, MelConfig};
use crate::generators::{
    external_scan, hn_train, tiered_train, ExternalGenerator, GeneratedSample, Generator, HnGenerator, HnModel,
    TieredGenerator, TieredModel,
};
use crate::metrics::{confusion, metric_report, select_thresholds, ConfusionMatrix, MetricReport};

pub use compare::{compare, delta, ComparisonRow, ComparisonTable, HighlightMode, HIGHLIGHT_DELTA};
pub use config::{CorpusConfig, ExperimentConfig, GeneratorConfig, GeneratorKind, LabelTask, RunConfig};
pub use synthetic::{make_synthetic_corpus, MatchedGenerator, NoiseGenerator, SyntheticCorpus};

pub const RESOLVED_CONFIG_FILE: &str = "config.resolved.toml";
pub const CHECKSUM_FILE: &str = "checksums.json";
pub const LOCK_FILE: &str = ".lock";
pub const REPORT_FILE: &str = "report.json";
pub const VALIDATION_REPORT_FILE: &str = "validation_report.json";
pub const MODEL_FILE: &str = "model.json";
/// Plans losing more than this share of entries are not comparable.
pub const MAX_SHORTFALL: f64 = 0.5;

/// Exclusive ownership of an output directory for the life of the value.
#[derive(Debug)]
pub struct RunLock {
    path: PathBuf,
}

impl RunLock {
    pub fn acquire(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let path = dir.join(LOCK_FILE);
        fs::OpenOptions::new()
            .write(true)
            .create_new(true)
            .open(&path)
            .map_err(|e| match e.kind() {
                std::io::ErrorKind::AlreadyExists => {
                    Error::Config(format!("{} is locked by another run ({})", dir.display(), path.display()))
                }
                _ => Error::io(&path, e),
            })?;
        Ok(RunLock { path })
    }
}

impl Drop for RunLock {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.path);
    }
}

/// Metadata and labels of all three splits.
#[derive(Clone, Debug)]
pub struct PreparedCorpus {
    pub vocabulary: LabelVocabulary,
    pub train: Vec<TrackRecord>,
    pub validation: Vec<TrackRecord>,
    pub test: Vec<TrackRecord>,
}

impl PreparedCorpus {
    pub fn split(&self, split: Split) -> &[TrackRecord] {
        match split {
            Split::Train => &self.train,
            Split::Validation => &self.validation,
            Split::Test => &self.test,
        }
    }

    pub fn labels(&self, split: Split) -> Vec<MultiHotLabels> {
        self.split(split).iter().map(|r| self.vocabulary.encode(r.tags.iter())).collect()
    }
}

/// Loads the three tables and applies the label task. Drop reports for the
/// emotional task are written to `report_dir` when given.
pub fn prepare_corpus(cfg: &CorpusConfig, report_dir: Option<&Path>) -> Result<PreparedCorpus> {
    let train = load_metadata(&cfg.train, Split::Train)?;
    let validation = load_metadata(&cfg.validation, Split::Validation)?;
    let test = load_metadata(&cfg.test, Split::Test)?;
    match cfg.task {
        LabelTask::MoodTheme => {
            let all: Vec<TrackRecord> = train.iter().chain(&validation).chain(&test).cloned().collect();
            Ok(PreparedCorpus {
                vocabulary: build_vocabulary(&all)?,
                train,
                validation,
                test,
            })
        }
        LabelTask::Emotional => {
            let path = cfg.mapping.clone().unwrap_or_else(|| PathBuf::from(DEFAULT_MAPPING_PATH));
            let map = load_mapping(&path)?;
            let mut out = Vec::new();
            let mut vocabulary = None;
            for (split, recs) in [(Split::Train, train), (Split::Validation, validation), (Split::Test, test)] {
                let r = relabel(&recs, &map, cfg.multi_quadrant);
                if let Some(dir) = report_dir {
                    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
                    write_drop_report(&dir.join(format!("dropped_{}.jsonl", split.as_str())), &r.dropped)?;
                }
                vocabulary = Some(r.vocabulary);
                out.push(r.records);
            }
            let test = out.pop().expect("three splits");
            let validation = out.pop().expect("three splits");
            let train = out.pop().expect("three splits");
            Ok(PreparedCorpus {
                vocabulary: vocabulary.expect("three splits"),
                train,
                validation,
                test,
            })
        }
    }
}

fn cache_key(r: &TrackRecord) -> String {
    format!("{}-{:016x}", r.track_id, fnv1a(r.audio_path.to_string_lossy().as_bytes()))
}

/// Mel features for `records`, reusing the on-disk cache when `cache_dir`
/// is given.
pub fn featurize(records: &[TrackRecord], mel: &MelConfig, cache_dir: Option<&Path>) -> Result<Vec<TrackFeatures>> {
    let fp = mel.fingerprint();
    let out = crate::exec::map_slice(records, |r| -> Result<TrackFeatures> {
        let key = cache_key(r);
        if let Some(dir) = cache_dir {
            if let Some(m) = cache::load(dir, &key, fp)? {
                return Ok(TrackFeatures {
                    track_id: r.track_id.clone(),
                    mel: m,
                });
            }
        }
        let audio = load_audio(&r.audio_path, mel.sample_rate_hz)?;
        let f = TrackFeatures::from_audio(r.track_id.clone(), &audio, mel)?;
        if let Some(dir) = cache_dir {
            cache::store(dir, &key, &f.mel)?;
        }
        Ok(f)
    });
    out.into_iter().collect()
}

fn labeled(features: Vec<TrackFeatures>, labels: Vec<MultiHotLabels>) -> Vec<LabeledFeatures> {
    features
        .into_iter()
        .zip(labels)
        .map(|(features, labels)| LabeledFeatures { features, labels })
        .collect()
}

fn sha256_file(path: &Path) -> Result<String> {
    let mut f = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut h = Sha256::new();
    let mut buf = vec![0u8; 1 << 16];
    loop {
        let n = f.read(&mut buf).map_err(|e| Error::io(path, e))?;
        if n == 0 {
            break;
        }
        h.update(&buf[..n]);
    }
    Ok(h.finalize().iter().map(|b| format!("{b:02x}")).collect())
}

/// SHA-256 of the validation and test tables and of every audio file they
/// reference.
pub fn held_out_checksums(cfg: &CorpusConfig, corpus: &PreparedCorpus) -> Result<BTreeMap<String, String>> {
    let mut paths = vec![cfg.validation.clone(), cfg.test.clone()];
    paths.extend(corpus.validation.iter().chain(&corpus.test).map(|r| r.audio_path.clone()));
    let sums = crate::exec::map_slice(&paths, |p| sha256_file(p).map(|s| (p.display().to_string(), s)));
    sums.into_iter().collect()
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    fs::write(path, serde_json::to_string_pretty(value)?).map_err(|e| Error::io(path, e))
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}

pub fn load_report(path: &Path) -> Result<MetricReport> {
    read_json(path)
}

/// Element-wise arithmetic mean; the identity for a single report.
pub fn average_reports(reports: &[MetricReport]) -> Result<MetricReport> {
    let first = reports.first().ok_or_else(|| Error::invalid("no reports to average"))?;
    if reports.len() == 1 {
        return Ok(first.clone());
    }
    if reports.iter().any(|r| r.n_classes != first.n_classes) {
        return Err(Error::Mismatch("reports disagree on the class count".into()));
    }
    let n = reports.len() as f64;
    let mut values = [0.0; 6];
    let mut thresholds = vec![0.0; first.thresholds.len()];
    for r in reports {
        for (v, x) in values.iter_mut().zip(r.values()) {
            *v += x;
        }
        for (t, x) in thresholds.iter_mut().zip(&r.thresholds) {
            *t += x;
        }
    }
    values.iter_mut().for_each(|v| *v /= n);
    thresholds.iter_mut().for_each(|t| *t /= n);
    let mut out = MetricReport::from_values(values, thresholds, first.n_tracks);
    out.n_classes = first.n_classes;
    let union = |f: fn(&MetricReport) -> &Vec<usize>| {
        let mut v: Vec<usize> = reports.iter().flat_map(|r| f(r).iter().copied()).collect();
        v.sort_unstable();
        v.dedup();
        v
    };
    out.prauc_excluded = union(|r| &r.prauc_excluded);
    out.rocauc_excluded = union(|r| &r.rocauc_excluded);
    out.f1_degenerate = union(|r| &r.f1_degenerate);
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialOutcome {
    pub seed: u64,
    pub test: MetricReport,
    pub validation: MetricReport,
    pub dir: PathBuf,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunOutcome {
    pub name: String,
    /// Trial-averaged test report.
    pub test: MetricReport,
    /// Trial-averaged validation report (thresholds tuned on it).
    pub validation: MetricReport,
    pub trials: Vec<TrialOutcome>,
    pub dir: PathBuf,
}

/// A prepared experiment: corpus, cached features and the locked output
/// directory.
pub struct Experiment {
    pub config: ExperimentConfig,
    pub corpus: PreparedCorpus,
    train: Vec<LabeledFeatures>,
    validation: Vec<LabeledFeatures>,
    test: Vec<LabeledFeatures>,
    checksums: BTreeMap<String, String>,
    _lock: RunLock,
}

impl Experiment {
    pub fn prepare(config: &ExperimentConfig) -> Result<Self> {
        config.validate()?;
        let out = config.experiment.output_dir.clone();
        let lock = RunLock::acquire(&out)?;
        let corpus = prepare_corpus(&config.corpus, Some(&out))?;
        let mut config = config.clone();
        if config.classifier.num_classes != corpus.vocabulary.len() {
            log::info!(
                "classifier.num_classes set to the vocabulary size {}",
                corpus.vocabulary.len()
            );
            config.classifier.num_classes = corpus.vocabulary.len();
        }
        config.classifier.validate()?;
        config.save(&out.join(RESOLVED_CONFIG_FILE))?;
        write_json(&out.join("vocabulary.json"), &corpus.vocabulary)?;

        let cache_dir = cache::cache_dir_from_env();
        let mel = &config.classifier.mel;
        let mut sets = Vec::new();
        for split in Split::ALL {
            let feats = featurize(corpus.split(split), mel, cache_dir.as_deref())?;
            sets.push(labeled(feats, corpus.labels(split)));
        }
        let test = sets.pop().expect("three splits");
        let validation = sets.pop().expect("three splits");
        let train = sets.pop().expect("three splits");
        let checksums = held_out_checksums(&config.corpus, &corpus)?;
        write_json(&out.join(CHECKSUM_FILE), &checksums)?;
        Ok(Experiment {
            config,
            corpus,
            train,
            validation,
            test,
            checksums,
            _lock: lock,
        })
    }

    pub fn output_dir(&self) -> &Path {
        &self.config.experiment.output_dir
    }

    fn verify_held_out(&self) -> Result<()> {
        let now = held_out_checksums(&self.config.corpus, &self.corpus)?;
        if now != self.checksums {
            return Err(Error::Mismatch("validation or test files changed during the run".into()));
        }
        Ok(())
    }

    fn classifier_config(&self, seed: u64) -> ClassifierConfig {
        ClassifierConfig {
            seed,
            ..self.config.classifier.clone()
        }
    }

    fn train_trial(&self, train_set: &[LabeledFeatures], seed: u64, dir: &Path) -> Result<TrialOutcome> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let cfg = self.classifier_config(seed);
        let model = classifier::train_logged(
            train_set,
            &self.validation,
            &self.corpus.vocabulary,
            &cfg,
            Some(&dir.join("train_log.jsonl")),
        )?;
        model.save(&dir.join(MODEL_FILE))?;
        let val_feats: Vec<TrackFeatures> = self.validation.iter().map(|l| l.features.clone()).collect();
        let test_feats: Vec<TrackFeatures> = self.test.iter().map(|l| l.features.clone()).collect();
        let val_labels: Vec<MultiHotLabels> = self.validation.iter().map(|l| l.labels.clone()).collect();
        let test_labels: Vec<MultiHotLabels> = self.test.iter().map(|l| l.labels.clone()).collect();
        let val_scores = predict(&model, &val_feats)?;
        let thresholds = select_thresholds(&val_scores, &val_labels)?;
        write_json(&dir.join("thresholds.json"), &thresholds)?;
        let validation = metric_report(&val_scores, &val_labels, &thresholds.values)?;
        let test_scores = predict(&model, &test_feats)?;
        let test = metric_report(&test_scores, &test_labels, &thresholds.values)?;
        write_json(&dir.join("test_scores.json"), &test_scores)?;
        fs::write(dir.join(REPORT_FILE), test.to_json()?).map_err(|e| Error::io(dir, e))?;
        fs::write(dir.join(VALIDATION_REPORT_FILE), validation.to_json()?).map_err(|e| Error::io(dir, e))?;
        Ok(TrialOutcome {
            seed,
            test,
            validation,
            dir: dir.to_path_buf(),
        })
    }

    fn finish(&self, name: &str, dir: PathBuf, trials: Vec<TrialOutcome>) -> Result<RunOutcome> {
        let test = average_reports(&trials.iter().map(|t| t.test.clone()).collect::<Vec<_>>())?;
        let validation = average_reports(&trials.iter().map(|t| t.validation.clone()).collect::<Vec<_>>())?;
        fs::write(dir.join(REPORT_FILE), test.to_json()?).map_err(|e| Error::io(&dir, e))?;
        fs::write(dir.join(VALIDATION_REPORT_FILE), validation.to_json()?).map_err(|e| Error::io(&dir, e))?;
        Ok(RunOutcome {
            name: name.to_string(),
            test,
            validation,
            trials,
            dir,
        })
    }

    /// One classifier per seed on the unaugmented train split.
    pub fn run_baseline(&self) -> Result<RunOutcome> {
        let dir = self.output_dir().join("baseline");
        let mut trials = Vec::new();
        for (i, seed) in self.config.experiment.seeds.iter().enumerate() {
            let t = self.train_trial(&self.train, *seed, &dir.join(format!("trial{i}")));
            trials.push(t.map_err(|e| Error::Trial {
                trial: i,
                source: Box::new(e),
            })?);
        }
        self.finish("baseline", dir, trials)
    }

    /// Plan for one trial; the policy seed is offset by the trial seed.
    pub fn plan(&self, profile: &crate::generators::GeneratorProfile, trial_seed: u64) -> Result<AugmentationPlan> {
        let policy = crate::augmentor::AugmentationPolicy {
            seed: self.config.policy.seed.wrapping_add(trial_seed),
            ..self.config.policy.clone()
        };
        build_plan(&self.corpus.train, &self.corpus.vocabulary, &policy, profile)
    }

    /// Per trial: plan, generate, train on train + generated, evaluate on
    /// the untouched test split.
    pub fn run_augmented(&self, generator: &dyn Generator) -> Result<RunOutcome> {
        let name = generator.profile().name.clone();
        let dir = self.output_dir().join(format!("augmented-{name}"));
        let paths: HashMap<&str, &Path> =
            self.corpus.train.iter().map(|r| (r.track_id.as_str(), r.audio_path.as_path())).collect();
        let sources = |id: &str| -> Result<crate::corpus::AudioBuffer> {
            let p = paths.get(id).ok_or_else(|| Error::invalid(format!("unknown source track {id}")))?;
            load_audio(p, generator.profile().sample_rate_hz)
        };
        let mel = &self.config.classifier.mel;
        let n_classes = self.corpus.vocabulary.len();
        let mut trials = Vec::new();
        for (i, seed) in self.config.experiment.seeds.iter().enumerate() {
            let tdir = dir.join(format!("trial{i}"));
            fs::create_dir_all(&tdir).map_err(|e| Error::io(&tdir, e))?;
            let plan = self.plan(generator.profile(), *seed)?;
            plan.save(&tdir.join(PLAN_FILE))?;
            let ex = execute_plan(&plan, generator, &sources, mel.sample_rate_hz, Some(&tdir.join("samples")))?;
            if ex.shortfall.fraction() > MAX_SHORTFALL {
                return Err(Error::Generation {
                    generator: name.clone(),
                    source_id: None,
                    seed: *seed,
                    message: format!(
                        "trial {i}: {:.0}% of the plan failed; run aborted",
                        100.0 * ex.shortfall.fraction()
                    ),
                });
            }
            let generated: Vec<Result<LabeledFeatures>> = crate::exec::map_slice(&augmented_set(&[], &ex.samples, n_classes), |item: &TrainItem| {
                Ok(LabeledFeatures {
                    features: TrackFeatures::from_audio(item.id.clone(), &item.audio, mel)?,
                    labels: item.labels.clone(),
                })
            });
            let mut train_set = self.train.clone();
            for g in generated {
                train_set.push(g?);
            }
            let t = self.train_trial(&train_set, *seed, &tdir);
            trials.push(t.map_err(|e| Error::Trial {
                trial: i,
                source: Box::new(e),
            })?);
            self.verify_held_out()?;
        }
        self.finish(&name, dir, trials)
    }
}

pub fn run_baseline(cfg: &ExperimentConfig) -> Result<RunOutcome> {
    Experiment::prepare(cfg)?.run_baseline()
}

pub fn run_augmented(cfg: &ExperimentConfig, generator: &dyn Generator) -> Result<RunOutcome> {
    Experiment::prepare(cfg)?.run_augmented(generator)
}

/// Serialised trained generator.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GeneratorCheckpoint {
    HarmonicNoise(HnModel),
    Tiered(TieredModel),
}

impl GeneratorCheckpoint {
    pub fn save(&self, path: &Path) -> Result<()> {
        write_json(path, self)
    }

    pub fn load(path: &Path) -> Result<Self> {
        read_json(path).map_err(|e| Error::Checkpoint(format!("{}: {e}", path.display())))
    }
}

fn train_audio(records: &[TrackRecord], rate: u32) -> Result<Vec<crate::corpus::AudioBuffer>> {
    crate::exec::map_slice(records, |r| load_audio(&r.audio_path, rate)).into_iter().collect()
}

/// Trains the configured model generator on the train split.
pub fn train_generator(cfg: &GeneratorConfig, corpus: &PreparedCorpus) -> Result<GeneratorCheckpoint> {
    match cfg.kind {
        GeneratorKind::HarmonicNoise => {
            let audio = train_audio(&corpus.train, cfg.hn.sample_rate_hz)?;
            Ok(GeneratorCheckpoint::HarmonicNoise(hn_train(&audio, &cfg.hn)?))
        }
        GeneratorKind::Tiered => {
            let audio = train_audio(&corpus.train, cfg.tiered.sample_rate_hz)?;
            Ok(GeneratorCheckpoint::Tiered(tiered_train(&audio, &cfg.tiered)?))
        }
        other => Err(Error::Config(format!("generator kind {other:?} is not trainable"))),
    }
}

/// Instantiates the configured generator, loading or training a model
/// where needed.
pub fn build_generator(cfg: &ExperimentConfig, corpus: &PreparedCorpus) -> Result<Box<dyn Generator>> {
    let g = &cfg.generator;
    let profile = g.resolved_profile(cfg.classifier.mel.sample_rate_hz);
    let checkpoint = || -> Result<GeneratorCheckpoint> {
        match &g.checkpoint {
            Some(p) => GeneratorCheckpoint::load(p),
            None => train_generator(g, corpus),
        }
    };
    Ok(match g.kind {
        GeneratorKind::HarmonicNoise | GeneratorKind::Tiered => match checkpoint()? {
            GeneratorCheckpoint::HarmonicNoise(model) => Box::new(HnGenerator { model, profile }),
            GeneratorCheckpoint::Tiered(model) => Box::new(TieredGenerator {
                model,
                profile,
                temperature: g.temperature,
            }),
        },
        GeneratorKind::External => {
            let dir = g.external_dir.as_ref().ok_or_else(|| Error::Config("generator.external_dir missing".into()))?;
            let samples = external_scan(dir, &corpus.vocabulary, &profile)?;
            Box::new(ExternalGenerator { profile, samples })
        }
        GeneratorKind::Matched => Box::new(MatchedGenerator {
            profile,
            n_classes: corpus.vocabulary.len(),
        }),
        GeneratorKind::WhiteNoise => Box::new(NoiseGenerator { profile }),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeneratedClassification {
    pub confusion: ConfusionMatrix,
    /// Predicted-class counts.
    pub histogram: Vec<usize>,
}

/// Scores generated samples with a trained classifier: rows are inherited
/// labels, columns the argmax prediction.
pub fn classify_generated(model: &TrainedModel, samples: &[GeneratedSample]) -> Result<GeneratedClassification> {
    if samples.is_empty() {
        return Err(Error::invalid("no generated samples to classify"));
    }
    let n = model.vocabulary.len();
    if let Some(s) = samples.iter().find(|s| s.inherited_label >= n) {
        return Err(Error::Mismatch(format!(
            "sample label {} outside the model's {n} classes",
            s.inherited_label
        )));
    }
    let rate = model.config.mel.sample_rate_hz;
    let tracks: Vec<(String, crate::corpus::AudioBuffer)> = samples
        .iter()
        .enumerate()
        .map(|(i, s)| Ok((format!("sample{i}"), resample(&s.audio, rate)?)))
        .collect::<Result<_>>()?;
    let scores = predict_audio(model, &tracks)?;
    let predicted = scores.argmax();
    let truth: Vec<usize> = samples.iter().map(|s| s.inherited_label).collect();
    let mut histogram = vec![0usize; n];
    for p in &predicted {
        histogram[*p] += 1;
    }
    Ok(GeneratedClassification {
        confusion: confusion(&predicted, &truth, n)?,
        histogram,
    })
}

/// Writes the confusion CSV/PNG and histogram CSV under `dir`.
pub fn write_classification(dir: &Path, vocabulary: &LabelVocabulary, c: &GeneratedClassification) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let p = dir.join("confusion.csv");
    fs::write(&p, c.confusion.to_csv(vocabulary.classes())).map_err(|e| Error::io(&p, e))?;
    plots::heatmap_png(&dir.join("confusion.png"), &c.confusion.normalized)?;
    let mut hist = String::from("class,predicted\n");
    for (name, n) in vocabulary.classes().iter().zip(&c.histogram) {
        hist.push_str(&format!("{name},{n}\n"));
    }
    let p = dir.join("prediction_histogram.csv");
    fs::write(&p, hist).map_err(|e| Error::io(&p, e))?;
    write_json(&dir.join("classification.json"), c)
}

/// Per-class hours (a track counts toward each of its tags) as CSV and a
/// bar chart.
pub fn write_class_durations(dir: &Path, corpus: &PreparedCorpus) -> Result<BTreeMap<String, f64>> {
    let mut hours: BTreeMap<String, f64> = corpus.vocabulary.classes().iter().map(|c| (c.clone(), 0.0)).collect();
    for r in corpus.train.iter().chain(&corpus.validation).chain(&corpus.test) {
        for t in &r.tags {
            if let Some(h) = hours.get_mut(t) {
                *h += r.duration_s / 3600.0;
            }
        }
    }
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut csv = String::from("class,hours\n");
    for (c, h) in &hours {
        csv.push_str(&format!("{c},{h:.4}\n"));
    }
    let p = dir.join("class_durations.csv");
    fs::write(&p, csv).map_err(|e| Error::io(&p, e))?;
    plots::bar_chart_png(&dir.join("class_durations.png"), &hours.values().copied().collect::<Vec<_>>())?;
    Ok(hours)
}

#[cfg(test)]
mod tests;
