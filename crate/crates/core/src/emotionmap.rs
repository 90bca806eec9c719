//! Relabelling of mood/theme tags into the four arousal/valence quadrants.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::corpus::{LabelVocabulary, TrackRecord};
use crate::error::{Error, Result};

/// Mapping file shipped with the crate (a reconstruction; see README).
pub const DEFAULT_MAPPING_PATH: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/data/mood_quadrants.tsv");

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QuadrantLabel {
    ActivatedPleasant,
    ActivatedUnpleasant,
    DeactivatedPleasant,
    DeactivatedUnpleasant,
}

impl QuadrantLabel {
    pub const ALL: [QuadrantLabel; 4] = [
        QuadrantLabel::ActivatedPleasant,
        QuadrantLabel::ActivatedUnpleasant,
        QuadrantLabel::DeactivatedPleasant,
        QuadrantLabel::DeactivatedUnpleasant,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            QuadrantLabel::ActivatedPleasant => "activated_pleasant",
            QuadrantLabel::ActivatedUnpleasant => "activated_unpleasant",
            QuadrantLabel::DeactivatedPleasant => "deactivated_pleasant",
            QuadrantLabel::DeactivatedUnpleasant => "deactivated_unpleasant",
        }
    }
}

impl fmt::Display for QuadrantLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for QuadrantLabel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        QuadrantLabel::ALL
            .into_iter()
            .find(|q| q.as_str() == s.trim())
            .ok_or_else(|| Error::invalid(format!("unknown quadrant `{}`", s.trim())))
    }
}

/// Tag to quadrant table.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct MoodQuadrantMap {
    pub entries: BTreeMap<String, QuadrantLabel>,
}

impl MoodQuadrantMap {
    pub fn get(&self, tag: &str) -> Option<QuadrantLabel> {
        self.entries.get(tag).copied()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Parse `tag<TAB>quadrant` lines; `#` comments and blank lines are skipped.
    pub fn parse(text: &str, origin: &Path) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let row_err = |message: String| Error::Row {
                path: origin.to_path_buf(),
                line: i + 1,
                message,
            };
            let mut cols = line.split('\t');
            let (tag, quad) = match (cols.next(), cols.next(), cols.next()) {
                (Some(t), Some(q), None) => (t.trim(), q),
                _ => return Err(row_err("expected two tab-separated columns".into())),
            };
            let quad: QuadrantLabel = quad.parse().map_err(|e: Error| row_err(e.to_string()))?;
            match entries.insert(tag.to_string(), quad) {
                Some(prev) if prev != quad => {
                    return Err(row_err(format!("tag `{tag}` maps to both {prev} and {quad}")));
                }
                _ => {}
            }
        }
        Ok(MoodQuadrantMap { entries })
    }
}

pub fn load_mapping(path: &Path) -> Result<MoodQuadrantMap> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    MoodQuadrantMap::parse(&text, path)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MultiQuadrantPolicy {
    #[default]
    Drop,
    KeepMultiLabel,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DropEntry {
    pub track_id: String,
    pub reason: String,
}

pub const REASON_NO_QUADRANT: &str = "no quadrant";
pub const REASON_MULTI_QUADRANT: &str = "multiple quadrants";

#[derive(Clone, Debug)]
pub struct Relabelled {
    /// Records whose `tags` are now quadrant names.
    pub records: Vec<TrackRecord>,
    pub vocabulary: LabelVocabulary,
    pub dropped: Vec<DropEntry>,
}

pub fn quadrant_vocabulary() -> LabelVocabulary {
    LabelVocabulary::new(QuadrantLabel::ALL.iter().map(|q| q.as_str().to_string()).collect())
        .expect("quadrant names are distinct")
}

pub fn relabel(records: &[TrackRecord], map: &MoodQuadrantMap, policy: MultiQuadrantPolicy) -> Relabelled {
    let mut kept = Vec::new();
    let mut dropped = Vec::new();
    for r in records {
        let quads: BTreeSet<QuadrantLabel> = r.tags.iter().filter_map(|t| map.get(t)).collect();
        let reason = match quads.len() {
            0 => Some(REASON_NO_QUADRANT),
            1 => None,
            _ if policy == MultiQuadrantPolicy::Drop => Some(REASON_MULTI_QUADRANT),
            _ => None,
        };
        match reason {
            Some(reason) => dropped.push(DropEntry {
                track_id: r.track_id.clone(),
                reason: reason.to_string(),
            }),
            None => {
                let mut out = r.clone();
                out.tags = quads.iter().map(|q| q.as_str().to_string()).collect();
                kept.push(out);
            }
        }
    }
    Relabelled {
        records: kept,
        vocabulary: quadrant_vocabulary(),
        dropped,
    }
}

/// Drop report as JSON lines.
pub fn write_drop_report(path: &Path, dropped: &[DropEntry]) -> Result<()> {
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    for d in dropped {
        writeln!(f, "{}", serde_json::to_string(d)?).map_err(|e| Error::io(path, e))?;
    }
    Ok(())
}

/// Total hours per quadrant (a multi-label track counts toward each).
pub fn class_durations(relabelled: &Relabelled) -> BTreeMap<String, f64> {
    let mut out: BTreeMap<String, f64> =
        relabelled.vocabulary.classes().iter().map(|c| (c.clone(), 0.0)).collect();
    for r in &relabelled.records {
        for t in &r.tags {
            *out.entry(t.clone()).or_default() += r.duration_s / 3600.0;
        }
    }
    out
}
