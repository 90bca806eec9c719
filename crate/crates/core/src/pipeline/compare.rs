use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::{MetricReport, METRIC_COLUMNS};

pub const HIGHLIGHT_DELTA: f64 = 0.01;
// Keeps exact-boundary cases such as 0.505 vs 0.5 on the intended side.
const BOUNDARY_EPS: f64 = 1e-12;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HighlightMode {
    /// `(augmented - baseline) / baseline >= 0.01`
    #[default]
    Relative,
    /// `augmented - baseline >= 0.01`
    Absolute,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub method: String,
    pub metric: String,
    pub averaging: String,
    pub baseline: f64,
    pub augmented: f64,
    /// Relative or absolute per the table mode; `None` for a relative delta
    /// against a zero baseline.
    pub delta: Option<f64>,
    pub highlight: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComparisonTable {
    pub mode: HighlightMode,
    pub baseline: MetricReport,
    pub methods: Vec<(String, MetricReport)>,
    pub rows: Vec<ComparisonRow>,
}

pub fn delta(baseline: f64, augmented: f64, mode: HighlightMode) -> (Option<f64>, bool) {
    match mode {
        HighlightMode::Relative => {
            if baseline == 0.0 {
                (None, augmented > 0.0)
            } else {
                let d = (augmented - baseline) / baseline;
                (Some(d), d >= HIGHLIGHT_DELTA - BOUNDARY_EPS)
            }
        }
        HighlightMode::Absolute => {
            let d = augmented - baseline;
            (Some(d), d >= HIGHLIGHT_DELTA - BOUNDARY_EPS)
        }
    }
}

pub fn compare(baseline: &MetricReport, augmented: &[(String, MetricReport)], mode: HighlightMode) -> Result<ComparisonTable> {
    let mut rows = Vec::new();
    for (name, rep) in augmented {
        if rep.n_classes != baseline.n_classes {
            return Err(Error::Mismatch(format!(
                "`{name}` reports {} classes, baseline {}",
                rep.n_classes, baseline.n_classes
            )));
        }
        for ((col, b), a) in METRIC_COLUMNS.iter().zip(baseline.values()).zip(rep.values()) {
            let (metric, averaging) = col.split_once('_').expect("metric_averaging");
            let (d, highlight) = delta(b, a, mode);
            rows.push(ComparisonRow {
                method: name.clone(),
                metric: metric.into(),
                averaging: averaging.into(),
                baseline: b,
                augmented: a,
                delta: d,
                highlight,
            });
        }
    }
    Ok(ComparisonTable {
        mode,
        baseline: baseline.clone(),
        methods: augmented.to_vec(),
        rows,
    })
}

impl ComparisonTable {
    /// Long format: one line per (method, metric, averaging).
    pub fn to_csv(&self) -> String {
        let mut s = String::from("method,metric,averaging,baseline,augmented,delta,highlight\n");
        for r in &self.rows {
            let d = r.delta.map(|d| format!("{d:.6}")).unwrap_or_default();
            s.push_str(&format!(
                "{},{},{},{:.6},{:.6},{},{}\n",
                r.method, r.metric, r.averaging, r.baseline, r.augmented, d, r.highlight
            ));
        }
        s
    }

    /// Wide format, one row per model with highlighted cells marked `*`.
    pub fn to_table_csv(&self) -> String {
        let mut s = MetricReport::csv_header();
        s.push('\n');
        s.push_str(&self.baseline.csv_row("baseline"));
        s.push('\n');
        for (name, rep) in &self.methods {
            s.push_str(name);
            for (i, v) in rep.values().iter().enumerate() {
                let hl = self.row(name, i).map(|r| r.highlight).unwrap_or(false);
                s.push_str(&format!(",{v:.3}{}", if hl { "*" } else { "" }));
            }
            s.push('\n');
        }
        s
    }

    fn row(&self, method: &str, column: usize) -> Option<&ComparisonRow> {
        self.rows.iter().filter(|r| r.method == method).nth(column)
    }

    pub fn highlights(&self) -> Vec<&ComparisonRow> {
        self.rows.iter().filter(|r| r.highlight).collect()
    }

    pub fn render_text(&self) -> String {
        let mut s = format!("{:<16}", "model");
        for c in METRIC_COLUMNS {
            s.push_str(&format!("{c:>14}"));
        }
        s.push('\n');
        s.push_str(&format!("{:<16}", "baseline"));
        for v in self.baseline.values() {
            s.push_str(&format!("{v:>14.3}"));
        }
        s.push('\n');
        for (name, rep) in &self.methods {
            s.push_str(&format!("{name:<16}"));
            for (i, v) in rep.values().iter().enumerate() {
                let r = self.row(name, i);
                let mark = if r.map(|r| r.highlight).unwrap_or(false) { "*" } else { " " };
                let d = r
                    .and_then(|r| r.delta)
                    .map(|d| match self.mode {
                        HighlightMode::Relative => format!("{:+.1}%", 100.0 * d),
                        HighlightMode::Absolute => format!("{d:+.3}"),
                    })
                    .unwrap_or_else(|| "n/a".into());
                s.push_str(&format!("{:>14}", format!("{v:.3}{mark}({d})")));
            }
            s.push('\n');
        }
        s.push_str(match self.mode {
            HighlightMode::Relative => "* at least 1% relative improvement over the baseline\n",
            HighlightMode::Absolute => "* at least 0.01 absolute improvement over the baseline\n",
        });
        s
    }
}
