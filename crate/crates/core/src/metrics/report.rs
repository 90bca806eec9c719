use serde::{Deserialize, Serialize};

use super::{f1, pr_auc, roc_auc, Averaging, ScoreMatrix};
use crate::corpus::MultiHotLabels;
use crate::error::Result;

pub const METRIC_COLUMNS: [&str; 6] = [
    "f1_macro",
    "f1_micro",
    "prauc_macro",
    "prauc_micro",
    "rocauc_macro",
    "rocauc_micro",
];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub f1_macro: f64,
    pub f1_micro: f64,
    pub prauc_macro: f64,
    pub prauc_micro: f64,
    pub rocauc_macro: f64,
    pub rocauc_micro: f64,
    pub thresholds: Vec<f64>,
    pub n_tracks: usize,
    pub n_classes: usize,
    /// Classes left out of macro PR-AUC (no positives).
    #[serde(default)]
    pub prauc_excluded: Vec<usize>,
    /// Classes left out of macro ROC-AUC (one-sided labels).
    #[serde(default)]
    pub rocauc_excluded: Vec<usize>,
    /// Classes with neither predictions nor positives (F1 counted as 0).
    #[serde(default)]
    pub f1_degenerate: Vec<usize>,
}

impl MetricReport {
    pub fn values(&self) -> [f64; 6] {
        [
            self.f1_macro,
            self.f1_micro,
            self.prauc_macro,
            self.prauc_micro,
            self.rocauc_macro,
            self.rocauc_micro,
        ]
    }

    pub fn from_values(values: [f64; 6], thresholds: Vec<f64>, n_tracks: usize) -> Self {
        MetricReport {
            f1_macro: values[0],
            f1_micro: values[1],
            prauc_macro: values[2],
            prauc_micro: values[3],
            rocauc_macro: values[4],
            rocauc_micro: values[5],
            n_classes: thresholds.len(),
            thresholds,
            n_tracks,
            prauc_excluded: Vec::new(),
            rocauc_excluded: Vec::new(),
            f1_degenerate: Vec::new(),
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    pub fn csv_header() -> String {
        format!("model,{}", METRIC_COLUMNS.join(","))
    }

    /// One table row, three decimals per value.
    pub fn csv_row(&self, model: &str) -> String {
        let vals: Vec<String> = self.values().iter().map(|v| format!("{v:.3}")).collect();
        format!("{model},{}", vals.join(","))
    }

    /// Header plus one row per `(model, report)`.
    pub fn table_csv(rows: &[(&str, &MetricReport)]) -> String {
        let mut s = Self::csv_header();
        s.push('\n');
        for (name, r) in rows {
            s.push_str(&r.csv_row(name));
            s.push('\n');
        }
        s
    }
}

pub fn metric_report(scores: &ScoreMatrix, labels: &[MultiHotLabels], thresholds: &[f64]) -> Result<MetricReport> {
    let f1_ma = f1(scores, labels, thresholds, Averaging::Macro)?;
    let f1_mi = f1(scores, labels, thresholds, Averaging::Micro)?;
    let pr_ma = pr_auc(scores, labels, Averaging::Macro)?;
    let pr_mi = pr_auc(scores, labels, Averaging::Micro)?;
    let roc_ma = roc_auc(scores, labels, Averaging::Macro)?;
    let roc_mi = roc_auc(scores, labels, Averaging::Micro)?;
    Ok(MetricReport {
        f1_macro: f1_ma.value,
        f1_micro: f1_mi.value,
        prauc_macro: pr_ma.value,
        prauc_micro: pr_mi.value,
        rocauc_macro: roc_ma.value,
        rocauc_micro: roc_mi.value,
        thresholds: thresholds.to_vec(),
        n_tracks: scores.n_tracks(),
        n_classes: scores.n_classes,
        prauc_excluded: pr_ma.excluded_classes,
        rocauc_excluded: roc_ma.excluded_classes,
        f1_degenerate: f1_ma.excluded_classes,
    })
}
