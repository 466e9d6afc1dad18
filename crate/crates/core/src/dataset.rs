//! Dataset records, validation and seeded k-fold splitting.
//!
//! Records are stored one JSON object per line:
//!
//! ```text
//! {"id":"r1","image":"art/123.jpg","caption":"a stormy sea",
//!  "dialog":[{"speaker":"q","text":"what do you see?"}],
//!  "emotion_candidates":["awe","fear"],"label_emotion":"awe",
//!  "explanation":"the waves look huge"}
//! ```
//!
//! Keys the harness does not know about are kept and written back out.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::jsonl::{self, JsonlError};

#[derive(Debug, thiserror::Error)]
pub enum DatasetError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("line {line}: malformed record: {message}")]
    Malformed { line: usize, message: String },
    #[error("line {line}: duplicate record id `{id}`")]
    DuplicateId { id: String, line: usize },
    #[error("record `{id}`: invalid `{field}`: {reason}")]
    Invalid {
        id: String,
        field: &'static str,
        reason: String,
    },
    #[error("k must be at least 2, got {k}")]
    TooFewFolds { k: usize },
    #[error("cannot split {records} records into {k} folds")]
    TooFewRecords { records: usize, k: usize },
    #[error("fold {fold} out of range for k = {k}")]
    FoldOutOfRange { fold: usize, k: usize },
    #[error("record `{id}` has no fold assignment")]
    Unassigned { id: String },
    #[error("invalid fold file: {0}")]
    FoldFile(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Speaker {
    #[serde(rename = "q")]
    Questioner,
    #[serde(rename = "a")]
    Answerer,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DialogTurn {
    pub speaker: Speaker,
    pub text: String,
}

/// One dataset item. `image_ref` is never opened; `caption` is a precomputed
/// image caption.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DialogRecord {
    pub id: String,
    #[serde(rename = "image")]
    pub image_ref: String,
    pub caption: String,
    pub dialog: Vec<DialogTurn>,
    pub emotion_candidates: Vec<String>,
    pub label_emotion: String,
    pub explanation: String,
    #[serde(flatten)]
    pub extra: serde_json::Map<String, serde_json::Value>,
}

impl DialogRecord {
    /// Checks every record-local invariant.
    pub fn validate(&self) -> Result<(), DatasetError> {
        let invalid = |field, reason: &str| DatasetError::Invalid {
            id: self.id.clone(),
            field,
            reason: reason.to_string(),
        };
        if self.id.is_empty() {
            return Err(invalid("id", "must be non-empty"));
        }
        if self.emotion_candidates.len() < 2 {
            return Err(invalid("emotion_candidates", "need at least two candidates"));
        }
        let mut seen = HashSet::new();
        for c in &self.emotion_candidates {
            if c.trim().is_empty() {
                return Err(invalid("emotion_candidates", "empty candidate"));
            }
            if !seen.insert(c.to_lowercase()) {
                return Err(DatasetError::Invalid {
                    id: self.id.clone(),
                    field: "emotion_candidates",
                    reason: format!("`{c}` is repeated (case-insensitive)"),
                });
            }
        }
        if !self.emotion_candidates.contains(&self.label_emotion) {
            return Err(DatasetError::Invalid {
                id: self.id.clone(),
                field: "label_emotion",
                reason: format!("`{}` is not one of the candidates", self.label_emotion),
            });
        }
        if self.dialog.is_empty() {
            return Err(invalid("dialog", "must contain at least one turn"));
        }
        if let Some(pos) = self.dialog.iter().position(|t| t.text.trim().is_empty()) {
            return Err(DatasetError::Invalid {
                id: self.id.clone(),
                field: "dialog",
                reason: format!("turn {pos} has empty text"),
            });
        }
        Ok(())
    }
}

/// Decodes and validates a single dataset line.
pub fn parse_record_line(line: &str) -> Result<DialogRecord, DatasetError> {
    let record: DialogRecord =
        jsonl::parse_line(line).map_err(|message| DatasetError::Malformed { line: 1, message })?;
    record.validate()?;
    Ok(record)
}

/// Reads records from any buffered reader, validating each one and rejecting
/// duplicate ids.
pub fn read_records<R: std::io::BufRead>(reader: R) -> Result<Vec<DialogRecord>, DatasetError> {
    let rows: Vec<(usize, DialogRecord)> = jsonl::read_lines(reader).map_err(|e| match e {
        JsonlError::Io(source) => DatasetError::Io {
            path: PathBuf::from("<reader>"),
            source,
        },
        JsonlError::Malformed { line, message } => DatasetError::Malformed { line, message },
    })?;
    let mut ids = HashSet::new();
    let mut out = Vec::with_capacity(rows.len());
    for (line, record) in rows {
        record.validate()?;
        if !ids.insert(record.id.clone()) {
            return Err(DatasetError::DuplicateId {
                id: record.id,
                line,
            });
        }
        out.push(record);
    }
    Ok(out)
}

/// Loads a dataset file. Records come back in file order.
pub fn load_records(path: impl AsRef<Path>) -> Result<Vec<DialogRecord>, DatasetError> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|source| DatasetError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    read_records(BufReader::new(file)).map_err(|e| match e {
        DatasetError::Io { source, .. } => DatasetError::Io {
            path: path.to_path_buf(),
            source,
        },
        other => other,
    })
}

pub fn write_records<W: Write>(writer: W, records: &[DialogRecord]) -> Result<(), JsonlError> {
    jsonl::write_lines(writer, records)
}

pub fn save_records(path: impl AsRef<Path>, records: &[DialogRecord]) -> Result<(), DatasetError> {
    let path = path.as_ref();
    let io_err = |source| DatasetError::Io {
        path: path.to_path_buf(),
        source,
    };
    let file = File::create(path).map_err(io_err)?;
    write_records(BufWriter::new(file), records).map_err(|e| match e {
        JsonlError::Io(source) => io_err(source),
        JsonlError::Malformed { line, message } => DatasetError::Malformed { line, message },
    })
}

/// SplitMix64 (Steele, Lea & Flood 2014). Chosen because it is a few lines in
/// any language, so fold files can be regenerated outside Rust bit-for-bit.
#[derive(Debug, Clone)]
pub struct SplitMix64 {
    state: u64,
}

impl SplitMix64 {
    pub fn new(seed: u64) -> Self {
        Self { state: seed }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(0x9E37_79B9_7F4A_7C15);
        let mut z = self.state;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }

    /// Uniform integer in `[0, bound)` by rejection: draws below
    /// `2^64 mod bound` are discarded, the rest reduced modulo `bound`.
    pub fn below(&mut self, bound: u64) -> u64 {
        assert!(bound > 0);
        let threshold = bound.wrapping_neg() % bound;
        loop {
            let x = self.next_u64();
            if x >= threshold {
                return x % bound;
            }
        }
    }
}

/// Fisher–Yates, walking from the last index down to 1.
fn shuffle<T>(items: &mut [T], rng: &mut SplitMix64) {
    for i in (1..items.len()).rev() {
        let j = rng.below(i as u64 + 1) as usize;
        items.swap(i, j);
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldAssignment {
    pub k: usize,
    pub seed: u64,
    #[serde(default)]
    pub stratify: bool,
    pub assignment: BTreeMap<String, usize>,
}

impl FoldAssignment {
    pub fn fold_of(&self, id: &str) -> Option<usize> {
        self.assignment.get(id).copied()
    }

    pub fn fold_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.k];
        for &fold in self.assignment.values() {
            sizes[fold] += 1;
        }
        sizes
    }

    /// Parses and checks a fold file. Every fold index must be below `k`.
    pub fn from_json(text: &str) -> Result<Self, DatasetError> {
        let folds: FoldAssignment =
            serde_json::from_str(text).map_err(|e| DatasetError::FoldFile(e.to_string()))?;
        if folds.k < 2 {
            return Err(DatasetError::TooFewFolds { k: folds.k });
        }
        if let Some((id, &fold)) = folds.assignment.iter().find(|(_, &f)| f >= folds.k) {
            return Err(DatasetError::FoldFile(format!(
                "record `{id}` assigned to fold {fold}, but k = {}",
                folds.k
            )));
        }
        Ok(folds)
    }

    /// Pretty JSON with sorted ids and a trailing newline.
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("fold assignment serializes");
        s.push('\n');
        s
    }
}

/// Assigns every record to one of `k` folds.
///
/// Ids are sorted lexicographically (by bytes) and shuffled with Fisher–Yates
/// driven by [`SplitMix64`] seeded with `seed`. Shuffled position `p` goes to
/// fold `p % k`. With `stratify`, the shuffled ids are grouped by label (labels
/// in sorted order, shuffled order kept inside each group) before dealing, so
/// each label is spread round-robin and fold sizes still differ by at most one.
pub fn split_folds(
    records: &[DialogRecord],
    k: usize,
    seed: u64,
    stratify: bool,
) -> Result<FoldAssignment, DatasetError> {
    if k < 2 {
        return Err(DatasetError::TooFewFolds { k });
    }
    if records.len() < k {
        return Err(DatasetError::TooFewRecords {
            records: records.len(),
            k,
        });
    }
    let mut labels: HashMap<&str, &str> = HashMap::with_capacity(records.len());
    for (line, r) in records.iter().enumerate() {
        if labels.insert(&r.id, &r.label_emotion).is_some() {
            return Err(DatasetError::DuplicateId {
                id: r.id.clone(),
                line: line + 1,
            });
        }
    }

    let mut ids: Vec<&str> = labels.keys().copied().collect();
    ids.sort_unstable();
    let mut rng = SplitMix64::new(seed);
    shuffle(&mut ids, &mut rng);

    if stratify {
        // stable sort keeps the shuffled order within each label
        ids.sort_by_key(|id| labels[id]);
    }

    let assignment = ids
        .iter()
        .enumerate()
        .map(|(pos, id)| (id.to_string(), pos % k))
        .collect();
    Ok(FoldAssignment {
        k,
        seed,
        stratify,
        assignment,
    })
}

/// Splits `records` into (train, holdout) for one fold, keeping record order.
pub fn fold_partition(
    records: &[DialogRecord],
    assignment: &FoldAssignment,
    fold: usize,
) -> Result<(Vec<DialogRecord>, Vec<DialogRecord>), DatasetError> {
    if fold >= assignment.k {
        return Err(DatasetError::FoldOutOfRange {
            fold,
            k: assignment.k,
        });
    }
    let mut train = Vec::new();
    let mut holdout = Vec::new();
    for r in records {
        match assignment.fold_of(&r.id) {
            Some(f) if f == fold => holdout.push(r.clone()),
            Some(_) => train.push(r.clone()),
            None => return Err(DatasetError::Unassigned { id: r.id.clone() }),
        }
    }
    Ok((train, holdout))
}
