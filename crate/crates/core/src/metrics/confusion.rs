use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Single-label confusion counts; rows are true classes, columns predictions.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub n_classes: usize,
    pub counts: Vec<Vec<u64>>,
    pub normalized: Vec<Vec<f64>>,
    /// True classes with no tracks; their normalized rows are all zero.
    pub empty_rows: Vec<usize>,
}

impl ConfusionMatrix {
    /// Fraction of tracks on the diagonal.
    pub fn accuracy(&self) -> f64 {
        let total: u64 = self.counts.iter().flatten().sum();
        if total == 0 {
            return 0.0;
        }
        let diag: u64 = (0..self.n_classes).map(|i| self.counts[i][i]).sum();
        diag as f64 / total as f64
    }

    pub fn to_csv(&self, class_names: &[String]) -> String {
        let mut s = String::from("true\\predicted");
        for n in class_names {
            s.push(',');
            s.push_str(n);
        }
        s.push('\n');
        for (i, row) in self.normalized.iter().enumerate() {
            s.push_str(class_names.get(i).map(String::as_str).unwrap_or("?"));
            for v in row {
                s.push_str(&format!(",{v:.4}"));
            }
            s.push('\n');
        }
        s
    }
}

pub fn confusion(predicted: &[usize], truth: &[usize], n_classes: usize) -> Result<ConfusionMatrix> {
    if predicted.len() != truth.len() {
        return Err(Error::Mismatch(format!(
            "{} predictions for {} labels",
            predicted.len(),
            truth.len()
        )));
    }
    let mut counts = vec![vec![0u64; n_classes]; n_classes];
    for (&p, &t) in predicted.iter().zip(truth) {
        if p >= n_classes || t >= n_classes {
            return Err(Error::invalid(format!(
                "class index {} out of range for {n_classes} classes",
                p.max(t)
            )));
        }
        counts[t][p] += 1;
    }
    let mut empty_rows = Vec::new();
    let normalized = counts
        .iter()
        .enumerate()
        .map(|(i, row)| {
            let sum: u64 = row.iter().sum();
            if sum == 0 {
                empty_rows.push(i);
                vec![0.0; n_classes]
            } else {
                row.iter().map(|c| *c as f64 / sum as f64).collect()
            }
        })
        .collect();
    Ok(ConfusionMatrix {
        n_classes,
        counts,
        normalized,
        empty_rows,
    })
}
