//! Multi-label evaluation: F1, PR-AUC and ROC-AUC with macro and micro
//! averaging, validation threshold selection and confusion matrices.

mod confusion;
pub mod ranking;
mod report;

use serde::{Deserialize, Serialize};

use crate::corpus::MultiHotLabels;
use crate::error::{Error, Result};

pub use confusion::{confusion, ConfusionMatrix};
pub use ranking::{average_precision, binary_roc_auc};
pub use report::{metric_report, MetricReport, METRIC_COLUMNS};

/// Per-track, per-class probabilities.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoreMatrix {
    pub track_ids: Vec<String>,
    pub n_classes: usize,
    /// Row-major `[tracks x classes]`.
    pub scores: Vec<f64>,
    /// Tracks shorter than one analysis window (scored on a padded window).
    #[serde(default)]
    pub padded: Vec<bool>,
}

impl ScoreMatrix {
    pub fn new(track_ids: Vec<String>, n_classes: usize, scores: Vec<f64>) -> Result<Self> {
        if scores.len() != track_ids.len() * n_classes {
            return Err(Error::Mismatch(format!(
                "{} scores for {} tracks x {} classes",
                scores.len(),
                track_ids.len(),
                n_classes
            )));
        }
        if let Some(bad) = scores.iter().find(|s| !(0.0..=1.0).contains(*s)) {
            return Err(Error::invalid(format!("score {bad} outside [0, 1]")));
        }
        let padded = vec![false; track_ids.len()];
        Ok(ScoreMatrix {
            track_ids,
            n_classes,
            scores,
            padded,
        })
    }

    pub fn n_tracks(&self) -> usize {
        self.track_ids.len()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.scores[i * self.n_classes..(i + 1) * self.n_classes]
    }

    pub fn column(&self, c: usize) -> Vec<f64> {
        (0..self.n_tracks()).map(|i| self.scores[i * self.n_classes + c]).collect()
    }

    /// Index of the highest score per track (first on ties).
    pub fn argmax(&self) -> Vec<usize> {
        (0..self.n_tracks())
            .map(|i| {
                let row = self.row(i);
                let mut best = 0;
                for (c, v) in row.iter().enumerate() {
                    if *v > row[best] {
                        best = c;
                    }
                }
                best
            })
            .collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Averaging {
    Macro,
    Micro,
}

/// A metric value plus the classes left out of a macro average.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricValue {
    pub value: f64,
    pub excluded_classes: Vec<usize>,
}

fn check_labels(scores: &ScoreMatrix, labels: &[MultiHotLabels]) -> Result<()> {
    if labels.len() != scores.n_tracks() {
        return Err(Error::Mismatch(format!(
            "{} label rows for {} scored tracks",
            labels.len(),
            scores.n_tracks()
        )));
    }
    if let Some(l) = labels.iter().find(|l| l.bits.len() != scores.n_classes) {
        return Err(Error::Mismatch(format!(
            "label width {} differs from {} classes",
            l.bits.len(),
            scores.n_classes
        )));
    }
    Ok(())
}

fn label_column(labels: &[MultiHotLabels], c: usize) -> Vec<bool> {
    labels.iter().map(|l| l.bits[c]).collect()
}

fn flattened(scores: &ScoreMatrix, labels: &[MultiHotLabels]) -> (Vec<f64>, Vec<bool>) {
    let ls = labels.iter().flat_map(|l| l.bits.iter().copied()).collect();
    (scores.scores.clone(), ls)
}

fn ranking_metric(
    scores: &ScoreMatrix,
    labels: &[MultiHotLabels],
    averaging: Averaging,
    name: &str,
    f: fn(&[f64], &[bool]) -> Option<f64>,
) -> Result<MetricValue> {
    check_labels(scores, labels)?;
    match averaging {
        Averaging::Macro => {
            let mut sum = 0.0;
            let mut n = 0usize;
            let mut excluded = Vec::new();
            for c in 0..scores.n_classes {
                match f(&scores.column(c), &label_column(labels, c)) {
                    Some(v) => {
                        sum += v;
                        n += 1;
                    }
                    None => excluded.push(c),
                }
            }
            if n == 0 {
                return Err(Error::invalid(format!("{name}: every class is degenerate")));
            }
            Ok(MetricValue {
                value: sum / n as f64,
                excluded_classes: excluded,
            })
        }
        Averaging::Micro => {
            let (s, l) = flattened(scores, labels);
            let value = f(&s, &l)
                .ok_or_else(|| Error::invalid(format!("{name}: pooled labels are one-sided")))?;
            Ok(MetricValue {
                value,
                excluded_classes: Vec::new(),
            })
        }
    }
}

/// ROC-AUC; macro averages classes that have both positives and negatives.
pub fn roc_auc(scores: &ScoreMatrix, labels: &[MultiHotLabels], averaging: Averaging) -> Result<MetricValue> {
    ranking_metric(scores, labels, averaging, "roc_auc", binary_roc_auc)
}

/// Average-precision PR-AUC; macro averages classes with positives.
pub fn pr_auc(scores: &ScoreMatrix, labels: &[MultiHotLabels], averaging: Averaging) -> Result<MetricValue> {
    ranking_metric(scores, labels, averaging, "pr_auc", average_precision)
}

/// Per-class decision thresholds chosen on validation data.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Thresholds {
    pub values: Vec<f64>,
    /// Classes without validation positives (fallback 0.5).
    pub fallback_classes: Vec<usize>,
}

impl Thresholds {
    pub fn fixed(n_classes: usize, value: f64) -> Self {
        Thresholds {
            values: vec![value; n_classes],
            fallback_classes: Vec::new(),
        }
    }
}

fn f1_from_counts(tp: usize, fp: usize, fn_: usize) -> Option<f64> {
    let den = 2 * tp + fp + fn_;
    (den > 0).then(|| 2.0 * tp as f64 / den as f64)
}

/// Best-F1 threshold of one class under the predicate `score >= threshold`.
/// Ties go to the larger threshold; the returned value is the midpoint of the
/// chosen cut.
pub fn best_threshold(scores: &[f64], labels: &[bool]) -> Option<f64> {
    let n_pos = labels.iter().filter(|l| **l).count();
    if n_pos == 0 {
        return None;
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].partial_cmp(&scores[a]).unwrap_or(std::cmp::Ordering::Equal));
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut best: Option<(f64, usize)> = None;
    let mut i = 0;
    while i < order.len() {
        let s = scores[order[i]];
        while i < order.len() && scores[order[i]] == s {
            if labels[order[i]] {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        let f = f1_from_counts(tp, fp, n_pos - tp).unwrap_or(0.0);
        if best.is_none_or(|(bf, _)| f > bf) {
            best = Some((f, i));
        }
    }
    let (_, end) = best?;
    let upper = scores[order[end - 1]];
    let threshold = match order.get(end) {
        Some(&next) => {
            let lower = scores[next];
            let mid = 0.5 * (upper + lower);
            if mid > lower && mid <= upper {
                mid
            } else {
                upper
            }
        }
        None => {
            if upper > 0.0 {
                0.5 * upper
            } else {
                upper
            }
        }
    };
    Some(threshold)
}

pub fn select_thresholds(val_scores: &ScoreMatrix, val_labels: &[MultiHotLabels]) -> Result<Thresholds> {
    check_labels(val_scores, val_labels)?;
    if val_scores.n_tracks() == 0 {
        return Err(Error::invalid("empty validation set"));
    }
    let mut values = Vec::with_capacity(val_scores.n_classes);
    let mut fallback = Vec::new();
    for c in 0..val_scores.n_classes {
        match best_threshold(&val_scores.column(c), &label_column(val_labels, c)) {
            Some(t) => values.push(t),
            None => {
                log::warn!("class {c} has no validation positives; threshold falls back to 0.5");
                fallback.push(c);
                values.push(0.5);
            }
        }
    }
    Ok(Thresholds {
        values,
        fallback_classes: fallback,
    })
}

/// Thresholded F1. Macro: mean of per-class F1 where classes without
/// predictions and truth contribute 0 (and are listed). Micro: pooled counts.
pub fn f1(
    scores: &ScoreMatrix,
    labels: &[MultiHotLabels],
    thresholds: &[f64],
    averaging: Averaging,
) -> Result<MetricValue> {
    check_labels(scores, labels)?;
    if thresholds.len() != scores.n_classes {
        return Err(Error::Mismatch(format!(
            "{} thresholds for {} classes",
            thresholds.len(),
            scores.n_classes
        )));
    }
    let mut counts = vec![(0usize, 0usize, 0usize); scores.n_classes];
    for (i, l) in labels.iter().enumerate() {
        for (c, cnt) in counts.iter_mut().enumerate() {
            let pred = scores.row(i)[c] >= thresholds[c];
            match (pred, l.bits[c]) {
                (true, true) => cnt.0 += 1,
                (true, false) => cnt.1 += 1,
                (false, true) => cnt.2 += 1,
                (false, false) => {}
            }
        }
    }
    let mut degenerate = Vec::new();
    let value = match averaging {
        Averaging::Macro => {
            let mut sum = 0.0;
            for (c, &(tp, fp, fn_)) in counts.iter().enumerate() {
                match f1_from_counts(tp, fp, fn_) {
                    Some(v) => sum += v,
                    None => degenerate.push(c),
                }
            }
            if scores.n_classes == 0 {
                0.0
            } else {
                sum / scores.n_classes as f64
            }
        }
        Averaging::Micro => {
            let (tp, fp, fn_) = counts
                .iter()
                .fold((0, 0, 0), |a, c| (a.0 + c.0, a.1 + c.1, a.2 + c.2));
            f1_from_counts(tp, fp, fn_).unwrap_or(0.0)
        }
    };
    Ok(MetricValue {
        value,
        excluded_classes: degenerate,
    })
}

#[cfg(test)]
mod tests;
