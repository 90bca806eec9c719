use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Validation,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Validation, Split::Test];

    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Validation => "validation",
            Split::Test => "test",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "train" => Ok(Split::Train),
            "validation" | "val" | "valid" => Ok(Split::Validation),
            "test" => Ok(Split::Test),
            other => Err(Error::invalid(format!("unknown split `{other}`"))),
        }
    }
}

/// One labeled audio item of the corpus.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrackRecord {
    pub track_id: String,
    pub audio_path: PathBuf,
    pub duration_s: f64,
    pub tags: BTreeSet<String>,
    pub split: Split,
}

/// Ordered, duplicate-free class list.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "Vec<String>", into = "Vec<String>")]
pub struct LabelVocabulary {
    classes: Vec<String>,
    index: HashMap<String, usize>,
}

impl From<Vec<String>> for LabelVocabulary {
    fn from(classes: Vec<String>) -> Self {
        let index = classes
            .iter()
            .enumerate()
            .map(|(i, c)| (c.clone(), i))
            .collect();
        LabelVocabulary { classes, index }
    }
}

impl From<LabelVocabulary> for Vec<String> {
    fn from(v: LabelVocabulary) -> Self {
        v.classes
    }
}

impl LabelVocabulary {
    /// Builds a vocabulary in the given order; duplicates are rejected.
    pub fn new(classes: Vec<String>) -> Result<Self> {
        let mut seen = BTreeSet::new();
        for c in &classes {
            if !seen.insert(c.as_str()) {
                return Err(Error::invalid(format!("duplicate class `{c}`")));
            }
        }
        Ok(classes.into())
    }

    pub fn classes(&self) -> &[String] {
        &self.classes
    }

    pub fn len(&self) -> usize {
        self.classes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.classes.is_empty()
    }

    pub fn index_of(&self, tag: &str) -> Option<usize> {
        self.index.get(tag).copied()
    }

    pub fn name(&self, idx: usize) -> &str {
        &self.classes[idx]
    }

    /// Multi-hot encoding; tags outside the vocabulary are ignored.
    pub fn encode<'a>(&self, tags: impl IntoIterator<Item = &'a String>) -> MultiHotLabels {
        let mut bits = vec![false; self.len()];
        for t in tags {
            if let Some(i) = self.index_of(t) {
                bits[i] = true;
            }
        }
        MultiHotLabels { bits }
    }

    pub fn unknown_class(&self, name: &str) -> Error {
        Error::UnknownClass {
            name: name.to_string(),
            valid: self.classes.join(", "),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MultiHotLabels {
    pub bits: Vec<bool>,
}

impl MultiHotLabels {
    pub fn one_hot(n: usize, class: usize) -> Self {
        let mut bits = vec![false; n];
        bits[class] = true;
        MultiHotLabels { bits }
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|b| **b).count()
    }

    pub fn active(&self) -> impl Iterator<Item = usize> + '_ {
        self.bits
            .iter()
            .enumerate()
            .filter_map(|(i, b)| b.then_some(i))
    }
}

const COLUMNS: [&str; 4] = ["track_id", "path", "duration", "tags"];

fn row_err(path: &Path, line: usize, message: impl Into<String>) -> Error {
    Error::Row {
        path: path.to_path_buf(),
        line,
        message: message.into(),
    }
}

/// Reads one split's tab-separated metadata table.
///
/// The first non-empty line is a header naming at least the columns
/// `track_id`, `path`, `duration` and `tags`; extra columns are ignored.
/// Relative audio paths are resolved against the table's directory.
pub fn load_metadata(table_path: &Path, split: Split) -> Result<Vec<TrackRecord>> {
    let text = fs::read_to_string(table_path).map_err(|e| Error::io(table_path, e))?;
    parse_metadata(&text, table_path, split)
}

pub(crate) fn parse_metadata(text: &str, table_path: &Path, split: Split) -> Result<Vec<TrackRecord>> {
    let base = table_path.parent().unwrap_or(Path::new(""));
    let mut lines = text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty());
    let Some((_, header)) = lines.next() else {
        return Err(Error::MissingColumn {
            path: table_path.to_path_buf(),
            column: COLUMNS[0].to_string(),
        });
    };
    let names: Vec<String> = header
        .split('\t')
        .map(|h| h.trim().to_ascii_lowercase())
        .collect();
    let mut cols = [0usize; 4];
    for (slot, want) in cols.iter_mut().zip(COLUMNS) {
        *slot = names
            .iter()
            .position(|n| n == want)
            .ok_or_else(|| Error::MissingColumn {
                path: table_path.to_path_buf(),
                column: want.to_string(),
            })?;
    }
    let width = cols.iter().max().copied().unwrap_or(0) + 1;

    let mut out = Vec::new();
    for (idx, line) in lines {
        let lineno = idx + 1;
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() < width {
            return Err(row_err(
                table_path,
                lineno,
                format!("expected at least {width} fields, found {}", fields.len()),
            ));
        }
        let track_id = fields[cols[0]].trim().to_string();
        if track_id.is_empty() {
            return Err(row_err(table_path, lineno, "empty track_id"));
        }
        let raw_path = fields[cols[1]].trim();
        if raw_path.is_empty() {
            return Err(row_err(table_path, lineno, "empty path"));
        }
        let duration_s: f64 = fields[cols[2]]
            .trim()
            .parse()
            .map_err(|_| row_err(table_path, lineno, format!("non-numeric duration `{}`", fields[cols[2]].trim())))?;
        if !duration_s.is_finite() || duration_s <= 0.0 {
            return Err(row_err(table_path, lineno, "non-positive duration"));
        }
        let tags: BTreeSet<String> = fields[cols[3]]
            .split(',')
            .map(|t| t.trim())
            .filter(|t| !t.is_empty())
            .map(str::to_string)
            .collect();
        if tags.is_empty() {
            return Err(row_err(table_path, lineno, "empty tag list"));
        }
        let p = PathBuf::from(raw_path);
        let audio_path = if p.is_absolute() { p } else { base.join(p) };
        out.push(TrackRecord {
            track_id,
            audio_path,
            duration_s,
            tags,
            split,
        });
    }
    Ok(out)
}

/// Writes records in the metadata layout read by [`load_metadata`].
pub fn write_metadata(table_path: &Path, records: &[TrackRecord]) -> Result<()> {
    let base = table_path.parent().unwrap_or(Path::new(""));
    let mut buf = String::from("track_id\tpath\tduration\ttags\n");
    for r in records {
        let rel = r
            .audio_path
            .strip_prefix(base)
            .ok()
            .filter(|_| !base.as_os_str().is_empty())
            .unwrap_or(&r.audio_path);
        let tags: Vec<&str> = r.tags.iter().map(String::as_str).collect();
        buf.push_str(&format!(
            "{}\t{}\t{}\t{}\n",
            r.track_id,
            rel.display(),
            r.duration_s,
            tags.join(",")
        ));
    }
    if let Some(dir) = table_path.parent() {
        if !dir.as_os_str().is_empty() {
            fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
    }
    let mut f = fs::File::create(table_path).map_err(|e| Error::io(table_path, e))?;
    f.write_all(buf.as_bytes())
        .map_err(|e| Error::io(table_path, e))
}

/// Sorted union of all tags.
pub fn build_vocabulary(records: &[TrackRecord]) -> Result<LabelVocabulary> {
    if records.is_empty() {
        return Err(Error::invalid("cannot build a vocabulary from zero records"));
    }
    let all: BTreeSet<&String> = records.iter().flat_map(|r| r.tags.iter()).collect();
    Ok(all.into_iter().cloned().collect::<Vec<_>>().into())
}

/// Total duration per split in hours. Each track counts once regardless of
/// how many tags it carries.
pub fn split_durations(records: &[TrackRecord]) -> BTreeMap<Split, f64> {
    let mut out: BTreeMap<Split, f64> = Split::ALL.iter().map(|s| (*s, 0.0)).collect();
    for r in records {
        *out.get_mut(&r.split).unwrap() += r.duration_s;
    }
    for v in out.values_mut() {
        *v /= 3600.0;
    }
    out
}
