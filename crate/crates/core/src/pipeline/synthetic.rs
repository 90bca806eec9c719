//! Separable-by-construction synthetic corpus and the two reference
//! generators built on it.

use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{write_metadata, write_wav, AudioBuffer, LabelVocabulary, Split, TrackRecord};
use crate::error::{Error, Result};
use crate::features::{mel_spectrogram, MelConfig};
use crate::generators::{GeneratedSample, GenerationRequest, Generator, GeneratorMode, GeneratorProfile, Provenance};

pub const TRACK_SECONDS: f64 = 10.0;
pub const MAX_CLASSES: usize = 16;
pub const MAX_HOURS: f64 = 4.0;
const OCTAVE_SPAN: f64 = 4.0;
const LOWEST_HZ: f64 = 100.0;

pub fn class_name(k: usize) -> String {
    format!("class{k:02}")
}

pub fn synthetic_vocabulary(n_classes: usize) -> LabelVocabulary {
    LabelVocabulary::new((0..n_classes).map(class_name).collect()).expect("distinct names")
}

/// Fundamental range of class `k`: one slot of a 4-octave ladder, using
/// 60 % of the slot so neighbouring classes never overlap.
pub fn f0_range(k: usize, n_classes: usize) -> (f64, f64) {
    let slot = OCTAVE_SPAN / n_classes as f64;
    let lo = LOWEST_HZ * 2f64.powf(k as f64 * slot);
    (lo, lo * 2f64.powf(0.6 * slot))
}

fn decay(k: usize) -> f64 {
    0.6 + 0.5 * (k % 4) as f64
}

fn noise_floor(k: usize) -> f64 {
    0.004 * (1 + k % 3) as f64
}

/// One draw from the class-conditional distribution: a melody of notes in
/// the class f0 range with class-specific harmonic decay and noise floor.
pub fn class_audio(k: usize, n_classes: usize, duration_s: f64, rate: u32, rng: &mut ChaCha8Rng) -> AudioBuffer {
    let n = (duration_s * rate as f64).round() as usize;
    let (lo, hi) = f0_range(k, n_classes);
    let nyq = rate as f64 / 2.0;
    let gain = rng.random_range(0.2..0.45);
    let vib_rate = rng.random_range(3.0..6.0);
    let mut out = vec![0f32; n];
    let mut phase = 0.0f64;
    let mut i = 0;
    while i < n {
        let note_len = ((rng.random_range(0.25..1.0) * rate as f64) as usize).min(n - i).max(1);
        let f = lo * (hi / lo).powf(rng.random::<f64>());
        let n_harm = ((0.9 * nyq / f) as usize).clamp(1, 20);
        let amps: Vec<f64> = (1..=n_harm).map(|h| (h as f64).powf(-decay(k))).collect();
        let norm: f64 = amps.iter().sum();
        for j in 0..note_len {
            let t = j as f64 / rate as f64;
            let env = (t / 0.02).min(1.0) * (-(t * 1.5)).exp();
            let inst = f * (1.0 + 0.005 * (2.0 * std::f64::consts::PI * vib_rate * (i + j) as f64 / rate as f64).sin());
            phase = (phase + 2.0 * std::f64::consts::PI * inst / rate as f64) % (2.0 * std::f64::consts::PI);
            // sin(h * phase) by the Chebyshev recurrence
            let c2 = 2.0 * phase.cos();
            let (mut s_prev, mut s) = (0.0, phase.sin());
            let mut acc = 0.0;
            for a in &amps {
                acc += a * s;
                let next = c2 * s - s_prev;
                s_prev = s;
                s = next;
            }
            out[i + j] = (gain * env * acc / norm) as f32;
        }
        i += note_len;
    }
    let floor = noise_floor(k);
    for v in out.iter_mut() {
        *v += (floor * rng.random_range(-1.0..1.0)) as f32;
    }
    AudioBuffer::new(out, rate)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SyntheticCorpus {
    pub root: PathBuf,
    pub n_classes: usize,
    pub sample_rate_hz: u32,
    pub seed: u64,
    pub records: Vec<TrackRecord>,
    /// Test accuracy of a nearest-centroid classifier on mean mel vectors.
    pub centroid_accuracy: f64,
}

impl SyntheticCorpus {
    pub fn metadata_path(&self, split: Split) -> PathBuf {
        metadata_path(&self.root, split)
    }

    pub fn split(&self, split: Split) -> Vec<TrackRecord> {
        self.records.iter().filter(|r| r.split == split).cloned().collect()
    }
}

pub fn metadata_path(root: &Path, split: Split) -> PathBuf {
    root.join(format!("{}.tsv", split.as_str()))
}

/// Splits `per_class` items 80/10/10.
fn split_counts(per_class: usize) -> (usize, usize) {
    let val = ((per_class as f64) * 0.1).round() as usize;
    let test = val;
    (per_class - val - test, val)
}

pub fn oracle_mel(rate: u32) -> MelConfig {
    let window = if rate >= 16_000 { 1024 } else { 512 };
    MelConfig {
        sample_rate_hz: rate,
        window,
        hop: window / 2,
        n_mels: 40,
        f_min_hz: 20.0,
        f_max_hz: 0.475 * rate as f64,
        ..MelConfig::default()
    }
}

/// Writes `<root>/audio/<class>/<id>.wav` plus `train.tsv`,
/// `validation.tsv` and `test.tsv`, stratified 80/10/10.
pub fn make_synthetic_corpus(root: &Path, n_classes: usize, hours: f64, rate: u32, seed: u64) -> Result<SyntheticCorpus> {
    if n_classes == 0 || n_classes > MAX_CLASSES {
        return Err(Error::invalid(format!("n_classes must lie in [1, {MAX_CLASSES}]")));
    }
    if !(hours > 0.0 && hours <= MAX_HOURS) {
        return Err(Error::invalid(format!("hours must lie in (0, {MAX_HOURS}]")));
    }
    let total_tracks = ((hours * 3600.0 / TRACK_SECONDS).round() as usize).max(n_classes);
    let per_class = total_tracks / n_classes;
    if per_class < 3 {
        return Err(Error::invalid("too few tracks per class for three splits"));
    }
    let (n_train, n_val) = split_counts(per_class);
    let jobs: Vec<(usize, usize)> = (0..n_classes).flat_map(|k| (0..per_class).map(move |j| (k, j))).collect();
    let audio_dir = root.join("audio");
    let results = crate::exec::map_slice(&jobs, |&(k, j)| -> Result<TrackRecord> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream((k * per_class + j) as u64);
        let audio = class_audio(k, n_classes, TRACK_SECONDS, rate, &mut rng);
        let id = format!("{}_{j:04}", class_name(k));
        let path = audio_dir.join(class_name(k)).join(format!("{id}.wav"));
        if let Some(dir) = path.parent() {
            std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
        write_wav(&path, &audio)?;
        let split = if j < n_train {
            Split::Train
        } else if j < n_train + n_val {
            Split::Validation
        } else {
            Split::Test
        };
        Ok(TrackRecord {
            track_id: id,
            audio_path: path,
            duration_s: audio.duration_s(),
            tags: [class_name(k)].into_iter().collect(),
            split,
        })
    });
    let records: Vec<TrackRecord> = results.into_iter().collect::<Result<_>>()?;
    for split in Split::ALL {
        let rows: Vec<TrackRecord> = records.iter().filter(|r| r.split == split).cloned().collect();
        write_metadata(&metadata_path(root, split), &rows)?;
    }
    let centroid_accuracy = nearest_centroid_accuracy(&records, n_classes, &oracle_mel(rate))?;
    log::info!("synthetic corpus: nearest-centroid test accuracy {centroid_accuracy:.3}");
    Ok(SyntheticCorpus {
        root: root.to_path_buf(),
        n_classes,
        sample_rate_hz: rate,
        seed,
        records,
        centroid_accuracy,
    })
}

fn mean_mel(path: &Path, mel: &MelConfig) -> Result<Vec<f64>> {
    let audio = crate::corpus::load_audio(path, mel.sample_rate_hz)?;
    let m = mel_spectrogram(&audio, mel)?;
    let mut mean = vec![0.0; m.n_mels];
    for f in 0..m.n_frames {
        for (b, acc) in mean.iter_mut().enumerate() {
            *acc += m.data[f * m.n_mels + b] as f64;
        }
    }
    mean.iter_mut().for_each(|v| *v /= m.n_frames as f64);
    Ok(mean)
}

/// Class centroids of mean log-mel vectors from the train split, scored on
/// the test split.
pub fn nearest_centroid_accuracy(records: &[TrackRecord], n_classes: usize, mel: &MelConfig) -> Result<f64> {
    let vocab = synthetic_vocabulary(n_classes);
    let label = |r: &TrackRecord| r.tags.iter().next().and_then(|t| vocab.index_of(t));
    let used: Vec<&TrackRecord> = records.iter().filter(|r| r.split != Split::Validation).collect();
    let feats = crate::exec::map_slice(&used, |r| mean_mel(&r.audio_path, mel));
    let mut centroids = vec![vec![0.0; mel.n_mels]; n_classes];
    let mut counts = vec![0usize; n_classes];
    let mut test = Vec::new();
    for (r, f) in used.iter().zip(feats) {
        let f = f?;
        let k = label(r).ok_or_else(|| Error::invalid(format!("track {} has no synthetic class", r.track_id)))?;
        if r.split == Split::Train {
            counts[k] += 1;
            centroids[k].iter_mut().zip(&f).for_each(|(c, v)| *c += v);
        } else {
            test.push((k, f));
        }
    }
    for (c, n) in centroids.iter_mut().zip(&counts) {
        c.iter_mut().for_each(|v| *v /= (*n).max(1) as f64);
    }
    if test.is_empty() {
        return Err(Error::invalid("no test tracks"));
    }
    let hits = test
        .iter()
        .filter(|(k, f)| {
            let dist = |c: &Vec<f64>| c.iter().zip(f).map(|(a, b)| (a - b).powi(2)).sum::<f64>();
            let best = (0..n_classes)
                .min_by(|&a, &b| dist(&centroids[a]).total_cmp(&dist(&centroids[b])))
                .unwrap();
            best == *k
        })
        .count();
    Ok(hits as f64 / test.len() as f64)
}

fn source_free_profile(name: &str, sample_length_s: f64, rate: u32) -> GeneratorProfile {
    GeneratorProfile {
        name: name.into(),
        mode: GeneratorMode::External,
        sample_length_s,
        prime_length_s: 0.0,
        sample_rate_hz: rate,
    }
}

/// Draws fresh tracks from the synthetic class-conditional distribution.
pub struct MatchedGenerator {
    pub profile: GeneratorProfile,
    pub n_classes: usize,
}

impl MatchedGenerator {
    pub fn new(n_classes: usize, sample_length_s: f64, rate: u32) -> Self {
        MatchedGenerator {
            profile: source_free_profile("matched", sample_length_s, rate),
            n_classes,
        }
    }
}

impl Generator for MatchedGenerator {
    fn profile(&self) -> &GeneratorProfile {
        &self.profile
    }

    fn generate(&self, r: &GenerationRequest) -> Result<GeneratedSample> {
        if r.target_class >= self.n_classes {
            return Err(crate::generators::generation_error(&self.profile, r, "class out of range"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(r.seed);
        let audio = class_audio(r.target_class, self.n_classes, self.profile.sample_length_s, self.profile.sample_rate_hz, &mut rng);
        Ok(GeneratedSample::finish(audio, r.target_class, provenance(&self.profile, r), Vec::new()))
    }
}

/// Label-uninformative white noise.
pub struct NoiseGenerator {
    pub profile: GeneratorProfile,
}

impl NoiseGenerator {
    pub fn new(sample_length_s: f64, rate: u32) -> Self {
        NoiseGenerator {
            profile: source_free_profile("white_noise", sample_length_s, rate),
        }
    }
}

impl Generator for NoiseGenerator {
    fn profile(&self) -> &GeneratorProfile {
        &self.profile
    }

    fn generate(&self, r: &GenerationRequest) -> Result<GeneratedSample> {
        let mut rng = ChaCha8Rng::seed_from_u64(r.seed);
        let gain = rng.random_range(0.1..0.4);
        let n = self.profile.sample_len();
        let audio = AudioBuffer::new((0..n).map(|_| gain * rng.random_range(-1.0f32..1.0)).collect(), self.profile.sample_rate_hz);
        Ok(GeneratedSample::finish(audio, r.target_class, provenance(&self.profile, r), Vec::new()))
    }
}

fn provenance(profile: &GeneratorProfile, r: &GenerationRequest) -> Provenance {
    Provenance {
        generator: profile.name.clone(),
        source_id: r.source_id.clone(),
        seed: r.seed,
        mode: profile.mode,
    }
}
