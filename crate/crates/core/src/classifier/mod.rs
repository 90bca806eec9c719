//! Multi-label tagger over log-mel windows.

mod config;
mod model;

use std::fs;
use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{AudioBuffer, LabelVocabulary, MultiHotLabels};
use crate::error::{Error, Result};
use crate::features::{mel_spectrogram, MelConfig, MelSpectrogram};
use crate::metrics::{pr_auc, Averaging};
use crate::nn::{Adam, Grads, Matrix, ParamSet};

pub use crate::metrics::ScoreMatrix;
pub use config::ClassifierConfig;
pub use model::Network;

pub const CHECKPOINT_FORMAT: &str = "augeval-classifier";
pub const CHECKPOINT_VERSION: u32 = 1;

/// Mel features of one track.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrackFeatures {
    pub track_id: String,
    pub mel: MelSpectrogram,
}

impl TrackFeatures {
    pub fn from_audio(track_id: impl Into<String>, audio: &AudioBuffer, mel: &MelConfig) -> Result<Self> {
        let padded;
        let audio = if audio.len() < mel.window {
            let mut s = audio.samples.clone();
            s.resize(mel.window, 0.0);
            padded = AudioBuffer::new(s, audio.sample_rate_hz);
            &padded
        } else {
            audio
        };
        Ok(TrackFeatures {
            track_id: track_id.into(),
            mel: mel_spectrogram(audio, mel)?,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LabeledFeatures {
    pub features: TrackFeatures,
    pub labels: MultiHotLabels,
}

/// Per-mel-bin standardisation fitted on the training frames.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Normalizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    /// Raw value used for padding frames (log of the mel epsilon).
    pub pad_value: f64,
}

impl Normalizer {
    pub fn fit(items: &[LabeledFeatures], mel: &MelConfig) -> Self {
        let n = items[0].features.mel.n_mels;
        let mut sum = vec![0.0; n];
        let mut sq = vec![0.0; n];
        let mut count = 0usize;
        for it in items {
            let m = &it.features.mel;
            for i in 0..m.n_frames {
                for (k, v) in m.frame(i).iter().enumerate() {
                    sum[k] += *v as f64;
                    sq[k] += (*v as f64).powi(2);
                }
            }
            count += m.n_frames;
        }
        let c = count.max(1) as f64;
        let mean: Vec<f64> = sum.iter().map(|s| s / c).collect();
        let std = sq
            .iter()
            .zip(&mean)
            .map(|(q, m)| (q / c - m * m).max(0.0).sqrt().max(1e-3))
            .collect();
        Normalizer {
            mean,
            std,
            pad_value: mel.log_eps.ln(),
        }
    }

    /// Normalised `[frames, n_mels]` window starting at `start`; rows past
    /// the end of the track are padding.
    pub fn window(&self, mel: &MelSpectrogram, start: usize, frames: usize) -> Matrix {
        let n = mel.n_mels;
        let mut out = Matrix::zeros(frames, n);
        for r in 0..frames {
            let row = out.row_mut(r);
            let src = start + r;
            for k in 0..n {
                let raw = if src < mel.n_frames { mel.frame(src)[k] as f64 } else { self.pad_value };
                row[k] = (raw - self.mean[k]) / self.std[k];
            }
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub val_prauc_macro: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainedModel {
    pub format: String,
    pub version: u32,
    pub config: ClassifierConfig,
    pub vocabulary: LabelVocabulary,
    pub network: Network,
    pub params: ParamSet,
    pub normalizer: Normalizer,
    pub history: Vec<EpochRecord>,
    /// Epoch whose weights were kept.
    pub best_epoch: usize,
}

impl TrainedModel {
    pub fn save(&self, path: &Path) -> Result<()> {
        let s = serde_json::to_string(self)?;
        fs::write(path, s).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let s = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let m: TrainedModel = serde_json::from_str(&s)?;
        if m.format != CHECKPOINT_FORMAT || m.version != CHECKPOINT_VERSION {
            return Err(Error::Checkpoint(format!(
                "{}: unsupported checkpoint {} v{}",
                path.display(),
                m.format,
                m.version
            )));
        }
        if m.vocabulary.len() != m.config.num_classes || !m.params.is_finite() {
            return Err(Error::Checkpoint(format!("{}: inconsistent checkpoint", path.display())));
        }
        Ok(m)
    }
}

fn check_set(name: &str, set: &[LabeledFeatures], cfg: &ClassifierConfig) -> Result<()> {
    if set.is_empty() {
        return Err(Error::invalid(format!("{name} set is empty")));
    }
    for it in set {
        if it.labels.bits.len() != cfg.num_classes {
            return Err(Error::Mismatch(format!(
                "{name} track {} has {} labels, expected {}",
                it.features.track_id,
                it.labels.bits.len(),
                cfg.num_classes
            )));
        }
        if it.features.mel.config_fingerprint != cfg.mel.fingerprint() {
            return Err(Error::Mismatch(format!(
                "{name} track {} was featurised with a different mel config",
                it.features.track_id
            )));
        }
    }
    Ok(())
}

pub fn train(
    train_set: &[LabeledFeatures],
    val_set: &[LabeledFeatures],
    vocabulary: &LabelVocabulary,
    cfg: &ClassifierConfig,
) -> Result<TrainedModel> {
    train_logged(train_set, val_set, vocabulary, cfg, None)
}

/// As [`train`], appending one JSON line per epoch to `log_path`.
pub fn train_logged(
    train_set: &[LabeledFeatures],
    val_set: &[LabeledFeatures],
    vocabulary: &LabelVocabulary,
    cfg: &ClassifierConfig,
    log_path: Option<&Path>,
) -> Result<TrainedModel> {
    cfg.validate()?;
    if vocabulary.len() != cfg.num_classes {
        return Err(Error::Config(format!(
            "vocabulary has {} classes, config {}",
            vocabulary.len(),
            cfg.num_classes
        )));
    }
    check_set("train", train_set, cfg)?;
    check_set("validation", val_set, cfg)?;
    for c in 0..cfg.num_classes {
        if !train_set.iter().any(|t| t.labels.bits[c]) {
            log::warn!("class `{}` has no training positives", vocabulary.name(c));
        }
    }
    let mut log = match log_path {
        Some(p) => Some((fs::File::create(p).map_err(|e| Error::io(p, e))?, p)),
        None => None,
    };

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let n_mels = cfg.mel.n_mels;
    let (network, mut params) = Network::new(cfg, n_mels, &mut rng);
    let normalizer = Normalizer::fit(train_set, &cfg.mel);
    let frames = cfg.window_frames();
    let targets: Vec<Matrix> = train_set
        .iter()
        .map(|t| Matrix::row_vector(t.labels.bits.iter().map(|b| *b as u8 as f64).collect()))
        .collect();
    let mut adam = Adam::new(&params, cfg.learning_rate).with_clip(cfg.grad_clip);

    let mut model = TrainedModel {
        format: CHECKPOINT_FORMAT.into(),
        version: CHECKPOINT_VERSION,
        config: cfg.clone(),
        vocabulary: vocabulary.clone(),
        network,
        params: params.clone(),
        normalizer,
        history: Vec::new(),
        best_epoch: 0,
    };
    // Validation macro PR-AUC, ties broken by lower validation loss.
    let mut best = (f64::NEG_INFINITY, f64::NEG_INFINITY);
    let mut stale = 0;

    for epoch in 1..=cfg.max_epochs {
        let mut items: Vec<(usize, usize)> = Vec::with_capacity(train_set.len() * cfg.windows_per_track);
        for (i, t) in train_set.iter().enumerate() {
            let span = t.features.mel.n_frames.saturating_sub(frames);
            for _ in 0..cfg.windows_per_track {
                items.push((i, rng.random_range(0..=span)));
            }
        }
        items.shuffle(&mut rng);

        let mut epoch_loss = 0.0;
        for batch in items.chunks(cfg.batch_size) {
            let parts: Vec<(f64, Grads)> = crate::exec::map_slice(batch, |&(i, off)| {
                let x = model.normalizer.window(&train_set[i].features.mel, off, frames);
                model.network.loss_and_grads(&params, &x, &targets[i])
            });
            let loss: f64 = parts.iter().map(|p| p.0).sum();
            if !loss.is_finite() {
                return Err(Error::Diverged { epoch });
            }
            epoch_loss += loss;
            let mut g = Grads::sum_ordered(parts.into_iter().map(|p| p.1).collect()).expect("non-empty batch");
            g.scale(1.0 / batch.len() as f64);
            adam.step(&mut params, &g);
            if !params.is_finite() {
                return Err(Error::Diverged { epoch });
            }
        }

        let scores = score_tracks(&model.network, &params, &model.normalizer, frames, cfg.num_classes, val_set.iter().map(|v| &v.features));
        let labels: Vec<MultiHotLabels> = val_set.iter().map(|v| v.labels.clone()).collect();
        let val_loss = mean_bce(&scores, &labels);
        let val_prauc = pr_auc(&scores, &labels, Averaging::Macro).ok().map(|m| m.value);
        let rec = EpochRecord {
            epoch,
            train_loss: epoch_loss / items.len() as f64,
            val_loss,
            val_prauc_macro: val_prauc,
        };
        if let Some((f, p)) = log.as_mut() {
            writeln!(f, "{}", serde_json::to_string(&rec)?).map_err(|e| Error::io(*p, e))?;
        }
        log::info!(
            "epoch {epoch}: train loss {:.4}, val loss {:.4}, val macro PR-AUC {:?}",
            rec.train_loss,
            val_loss,
            val_prauc
        );
        model.history.push(rec);

        let criterion = (val_prauc.unwrap_or(f64::NEG_INFINITY), -val_loss);
        if criterion > best {
            best = criterion;
            stale = 0;
            model.params = params.clone();
            model.best_epoch = epoch;
        } else {
            stale += 1;
            if stale >= cfg.patience {
                break;
            }
        }
    }
    Ok(model)
}

fn mean_bce(scores: &ScoreMatrix, labels: &[MultiHotLabels]) -> f64 {
    let mut total = 0.0;
    for (i, l) in labels.iter().enumerate() {
        for (p, y) in scores.row(i).iter().zip(&l.bits) {
            let p = p.clamp(1e-7, 1.0 - 1e-7);
            total -= if *y { p.ln() } else { (1.0 - p).ln() };
        }
    }
    total / labels.len().max(1) as f64
}

fn score_tracks<'a>(
    network: &Network,
    params: &ParamSet,
    norm: &Normalizer,
    frames: usize,
    n_classes: usize,
    tracks: impl Iterator<Item = &'a TrackFeatures>,
) -> ScoreMatrix {
    let tracks: Vec<&TrackFeatures> = tracks.collect();
    let rows: Vec<(Vec<f64>, bool)> = crate::exec::map_slice(&tracks, |t| {
        let n = t.mel.n_frames;
        let n_windows = n / frames;
        if n_windows == 0 {
            return (network.scores(params, &norm.window(&t.mel, 0, frames)), true);
        }
        let mut acc = vec![0.0; n_classes];
        for w in 0..n_windows {
            for (a, s) in acc.iter_mut().zip(network.scores(params, &norm.window(&t.mel, w * frames, frames))) {
                *a += s;
            }
        }
        acc.iter_mut().for_each(|a| *a /= n_windows as f64);
        (acc, false)
    });
    ScoreMatrix {
        track_ids: tracks.iter().map(|t| t.track_id.clone()).collect(),
        n_classes,
        scores: rows.iter().flat_map(|r| r.0.iter().copied()).collect(),
        padded: rows.iter().map(|r| r.1).collect(),
    }
}

/// Scores each track as the mean over its consecutive windows. Tracks
/// shorter than one window are scored on a padded window and flagged.
pub fn predict(model: &TrainedModel, tracks: &[TrackFeatures]) -> Result<ScoreMatrix> {
    for t in tracks {
        if t.mel.config_fingerprint != model.config.mel.fingerprint() {
            return Err(Error::Mismatch(format!(
                "track {} was featurised with a different mel config",
                t.track_id
            )));
        }
    }
    Ok(score_tracks(
        &model.network,
        &model.params,
        &model.normalizer,
        model.config.window_frames(),
        model.config.num_classes,
        tracks.iter(),
    ))
}

/// Featurises and scores raw audio (already at the model's sample rate).
pub fn predict_audio(model: &TrainedModel, tracks: &[(String, AudioBuffer)]) -> Result<ScoreMatrix> {
    let feats = crate::exec::map_slice(tracks, |(id, a)| TrackFeatures::from_audio(id.clone(), a, &model.config.mel));
    let feats: Vec<TrackFeatures> = feats.into_iter().collect::<Result<_>>()?;
    predict(model, &feats)
}
