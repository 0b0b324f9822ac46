//! Per-question replay buffer of failed tests with failure frequencies.
//!
//! On disk the book is a JSON object keyed by question id, each value an
//! array of `{"testcase": ..., "frequency": ...}` in insertion order.

use std::fmt::Write as _;
use std::path::Path;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::assertion::{normalize, parse_assertion, AssertionCase};

#[derive(Debug, Error)]
pub enum BookError {
    #[error("mistake book I/O error: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed mistake book at {key}: {reason}")]
    Format { key: String, reason: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HistEntry {
    pub testcase: String,
    pub frequency: u64,
}

/// Per-test tallies for one step: failures and passes across all candidates.
pub type Tallies = IndexMap<String, (u64, u64)>;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct UpdateSummary {
    pub added: usize,
    pub removed: usize,
    /// Net change of the summed frequency.
    pub delta: i64,
}

impl UpdateSummary {
    pub fn merge(&mut self, other: UpdateSummary) {
        self.added += other.added;
        self.removed += other.removed;
        self.delta += other.delta;
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
#[serde(transparent)]
pub struct MistakeBook {
    entries: IndexMap<String, Vec<HistEntry>>,
}

impl MistakeBook {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn entries(&self, question_id: &str) -> &[HistEntry] {
        self.entries.get(question_id).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn questions(&self) -> impl Iterator<Item = (&str, &[HistEntry])> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v.as_slice()))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn total_entries(&self) -> usize {
        self.entries.values().map(Vec::len).sum()
    }

    /// Highest-frequency tests first (ties keep insertion order), at most `cap`.
    pub fn retrieve(&self, question_id: &str, cap: usize) -> Vec<AssertionCase> {
        let mut list: Vec<&HistEntry> = self.entries(question_id).iter().collect();
        list.sort_by(|a, b| b.frequency.cmp(&a.frequency));
        list.into_iter().take(cap).map(|e| parse_assertion(&e.testcase)).collect()
    }

    /// Applies one step's tallies: `new = max(0, old + fails - passes)`.
    /// Unseen tests enter only when they failed; entries reaching zero leave.
    pub fn apply_step_update(&mut self, question_id: &str, tallies: &Tallies) -> UpdateSummary {
        let mut summary = UpdateSummary::default();
        let list = self.entries.entry(question_id.to_string()).or_default();
        for (testcase, &(fails, passes)) in tallies {
            let key = normalize(testcase).unwrap_or_else(|| testcase.clone());
            match list.iter_mut().find(|e| e.testcase == key) {
                Some(entry) => {
                    let old = entry.frequency;
                    entry.frequency = (old + fails).saturating_sub(passes);
                    summary.delta += entry.frequency as i64 - old as i64;
                }
                None => {
                    let freq = fails.saturating_sub(passes);
                    if fails > 0 && freq > 0 {
                        list.push(HistEntry { testcase: key, frequency: freq });
                        summary.added += 1;
                        summary.delta += freq as i64;
                    }
                }
            }
        }
        let before = list.len();
        list.retain(|e| e.frequency > 0);
        summary.removed = before - list.len();
        if list.is_empty() {
            self.entries.shift_remove(question_id);
        }
        summary
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("book serializes")
    }

    /// Parses and validates a book document. Test texts are canonicalized.
    pub fn from_json(text: &str) -> Result<Self, BookError> {
        let fmt = |key: &str, reason: &str| BookError::Format { key: key.to_string(), reason: reason.to_string() };
        let raw: IndexMap<String, serde_json::Value> =
            serde_json::from_str(text).map_err(|e| fmt("<root>", &e.to_string()))?;
        let mut entries = IndexMap::with_capacity(raw.len());
        for (qid, value) in raw {
            let items = value.as_array().ok_or_else(|| fmt(&qid, "expected an array"))?;
            let mut list: Vec<HistEntry> = Vec::with_capacity(items.len());
            for (i, item) in items.iter().enumerate() {
                let at = format!("{qid}[{i}]");
                let obj = item.as_object().ok_or_else(|| fmt(&at, "expected an object"))?;
                let testcase = obj
                    .get("testcase")
                    .and_then(|v| v.as_str())
                    .ok_or_else(|| fmt(&at, "missing string field \"testcase\""))?;
                let frequency = obj
                    .get("frequency")
                    .and_then(|v| v.as_u64())
                    .ok_or_else(|| fmt(&at, "missing integer field \"frequency\""))?;
                if frequency == 0 {
                    return Err(fmt(&at, "frequency must be positive"));
                }
                let canonical = normalize(testcase).ok_or_else(|| fmt(&at, "testcase is not an assertion"))?;
                if list.iter().any(|e| e.testcase == canonical) {
                    return Err(fmt(&at, "duplicate testcase"));
                }
                list.push(HistEntry { testcase: canonical, frequency });
            }
            if !list.is_empty() {
                entries.insert(qid, list);
            }
        }
        Ok(Self { entries })
    }

    pub fn save(&self, path: &Path) -> Result<(), BookError> {
        let tmp = path.with_extension("json.tmp");
        std::fs::write(&tmp, self.to_json())?;
        std::fs::rename(&tmp, path)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, BookError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    /// Human-readable listing, most frequent first.
    pub fn inspect(&self) -> String {
        let mut out = format!("{} question(s), {} test(s)\n", self.len(), self.total_entries());
        for (qid, list) in &self.entries {
            let _ = writeln!(out, "{qid} ({} test(s))", list.len());
            let mut sorted: Vec<&HistEntry> = list.iter().collect();
            sorted.sort_by(|a, b| b.frequency.cmp(&a.frequency));
            for e in sorted {
                let _ = writeln!(out, "  {:>5}  {}", e.frequency, e.testcase);
            }
        }
        out
    }
}
