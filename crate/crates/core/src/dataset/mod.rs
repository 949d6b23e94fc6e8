//! Dataset construction: ingest, LLM labeling, augmentation to parity,
//! human review, sampling plans and export.
//!
//! Pools are stored as line-delimited JSON with a schema header. The same
//! file doubles as the resumable checkpoint for labeling and augmentation.

mod annotation;
mod augment;
mod export;
mod ingest;
mod label;
mod sample;

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::classifier::ClassifyError;
use crate::taxonomy::Taxonomy;
use crate::text::{content_id, normalize, sha256_hex};

pub use annotation::{
    AnnotationError, AnnotationStore, ItemFilter, Revision, RevisionKind, ReviewRequest,
};
pub use augment::{augment_to_parity, generation_prompt, AugmentOptions, AugmentReport, QueryGenerator};
pub use export::{export_split, read_export, ExportRecord, ExportReport};
pub use ingest::{ingest, CorpusRecord, IngestReport};
pub use label::{llm_label, LabelOptions, LabelReport};
pub use sample::{
    largest_remainder, sample, sample_excluding, DatasetSplit, Holdout, PlanKind, SamplingPlan,
    SplitEntry, TOXIC_TARGET,
};

pub const DATASET_SCHEMA: &str = "tacos.dataset";
pub const DATASET_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum DatasetError {
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path} line {line}: {message}")]
    Format {
        path: String,
        line: usize,
        message: String,
    },
    #[error("pool is empty")]
    EmptyPool,
    #[error("labeling endpoint unavailable after {labeled} items were labeled: {source}")]
    EndpointUnavailable {
        labeled: usize,
        #[source]
        source: ClassifyError,
    },
    #[error("class {0:?} has no labeled exemplar to seed generation")]
    NoSeedExemplar(String),
    #[error("stratum {stratum:?} needs {needed} items but only {available} are available")]
    Insufficient {
        stratum: String,
        needed: usize,
        available: usize,
    },
    #[error("invalid sampling plan: {0}")]
    InvalidPlan(String),
    #[error("split references item {0:?} which is missing or removed")]
    DanglingId(String),
    #[error("unknown label {0:?}")]
    UnknownLabel(String),
}

pub(crate) fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> DatasetError + '_ {
    move |source| DatasetError::Io {
        path: path.display().to_string(),
        source,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Collected,
    LlmLabeled,
    Synthetic,
    HumanReviewed,
}

impl Provenance {
    /// Provenance only moves forward: collected -> llm_labeled -> human_reviewed,
    /// synthetic -> human_reviewed.
    pub fn can_advance_to(self, next: Provenance) -> bool {
        use Provenance::*;
        matches!(
            (self, next),
            (Collected, LlmLabeled) | (Collected, HumanReviewed) | (LlmLabeled, HumanReviewed) | (Synthetic, HumanReviewed)
        ) || self == next
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReviewAction {
    Confirmed,
    Relabeled,
    Edited,
    Removed,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Review {
    pub annotator_id: String,
    pub action: ReviewAction,
    pub timestamp: DateTime<Utc>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabeledQuery {
    pub id: String,
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label_id: Option<String>,
    pub source: String,
    pub provenance: Provenance,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub reviews: Vec<Review>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub locale: Option<String>,
    /// Set when LLM labeling exhausted its retries on this item.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub labeling_failed: bool,
    /// Bumped on every human review action.
    #[serde(default)]
    pub revision: u64,
}

impl LabeledQuery {
    pub fn new(text: &str, source: &str, provenance: Provenance) -> Self {
        Self {
            id: content_id(text),
            text: normalize(text),
            label_id: None,
            source: source.to_string(),
            provenance,
            reviews: Vec::new(),
            locale: None,
            labeling_failed: false,
            revision: 0,
        }
    }

    pub fn with_label(mut self, label: &str) -> Self {
        self.label_id = Some(label.to_string());
        self
    }

    pub fn is_removed(&self) -> bool {
        self.reviews.iter().any(|r| r.action == ReviewAction::Removed)
    }

    /// Labeled and not removed.
    pub fn is_usable(&self) -> bool {
        self.label_id.is_some() && !self.is_removed()
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    schema: String,
    version: u32,
    kind: String,
}

/// Ordered collection of queries keyed by id, deduplicated by normalized text.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Pool {
    items: Vec<LabeledQuery>,
    index: HashMap<String, usize>,
    text_keys: HashSet<String>,
}

impl Pool {
    pub fn new() -> Self {
        Self::default()
    }

    /// Inserts unless an item with the same id or normalized text exists.
    pub fn insert(&mut self, item: LabeledQuery) -> bool {
        let key = content_id(&item.text);
        if self.index.contains_key(&item.id) || self.text_keys.contains(&key) {
            return false;
        }
        self.text_keys.insert(key);
        self.index.insert(item.id.clone(), self.items.len());
        self.items.push(item);
        true
    }

    /// Whether text with this normalized form is already pooled.
    pub fn contains_text(&self, text: &str) -> bool {
        self.text_keys.contains(&content_id(text))
    }

    pub fn get(&self, id: &str) -> Option<&LabeledQuery> {
        self.index.get(id).map(|&i| &self.items[i])
    }

    pub(crate) fn get_mut(&mut self, id: &str) -> Option<&mut LabeledQuery> {
        self.index.get(id).map(|&i| &mut self.items[i])
    }

    /// Replaces an item's text, keeping its id.
    pub(crate) fn set_text(&mut self, id: &str, text: &str) -> bool {
        let Some(&i) = self.index.get(id) else {
            return false;
        };
        let new_key = content_id(text);
        let old_key = content_id(&self.items[i].text);
        if new_key != old_key && self.text_keys.contains(&new_key) {
            return false;
        }
        self.text_keys.remove(&old_key);
        self.text_keys.insert(new_key);
        self.items[i].text = normalize(text);
        true
    }

    pub fn items(&self) -> &[LabeledQuery] {
        &self.items
    }

    pub fn iter(&self) -> impl Iterator<Item = &LabeledQuery> {
        self.items.iter()
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    /// Counts of usable items per label, for labels in `taxonomy`, canonical order.
    pub fn label_counts(&self, taxonomy: &Taxonomy) -> Vec<usize> {
        let mut counts = vec![0; taxonomy.len()];
        for item in self.items.iter().filter(|i| i.is_usable()) {
            if let Some(i) = item.label_id.as_deref().and_then(|l| taxonomy.index_of(l)) {
                counts[i] += 1;
            }
        }
        counts
    }

    /// Usable items per label, any label.
    pub fn counts_by_label(&self) -> BTreeMap<String, usize> {
        let mut out = BTreeMap::new();
        for item in self.items.iter().filter(|i| i.is_usable()) {
            *out.entry(item.label_id.clone().expect("usable")).or_insert(0) += 1;
        }
        out
    }

    /// Digest over the serialized records in pool order.
    pub fn digest(&self) -> String {
        let mut buf = Vec::new();
        for item in &self.items {
            serde_json::to_writer(&mut buf, item).expect("records serialize");
            buf.push(b'\n');
        }
        sha256_hex(&buf)
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<(), DatasetError> {
        let path = path.as_ref();
        let tmp = path.with_extension("tmp");
        {
            let file = File::create(&tmp).map_err(io_err(&tmp))?;
            let mut w = BufWriter::new(file);
            let header = Header {
                schema: DATASET_SCHEMA.into(),
                version: DATASET_SCHEMA_VERSION,
                kind: "pool".into(),
            };
            serde_json::to_writer(&mut w, &header).expect("header serializes");
            w.write_all(b"\n").map_err(io_err(&tmp))?;
            for item in &self.items {
                serde_json::to_writer(&mut w, item).expect("records serialize");
                w.write_all(b"\n").map_err(io_err(&tmp))?;
            }
            w.flush().map_err(io_err(&tmp))?;
        }
        std::fs::rename(&tmp, path).map_err(io_err(path))
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self, DatasetError> {
        let path = path.as_ref();
        let file = File::open(path).map_err(io_err(path))?;
        let fmt = |line: usize, message: String| DatasetError::Format {
            path: path.display().to_string(),
            line,
            message,
        };
        let mut pool = Pool::new();
        for (i, line) in BufReader::new(file).lines().enumerate() {
            let line = line.map_err(io_err(path))?;
            if line.trim().is_empty() {
                continue;
            }
            if i == 0 {
                let h: Header = serde_json::from_str(&line).map_err(|e| fmt(1, format!("bad header: {e}")))?;
                if h.schema != DATASET_SCHEMA || h.version != DATASET_SCHEMA_VERSION || h.kind != "pool" {
                    return Err(fmt(1, format!("unsupported header {}/{}/{}", h.schema, h.version, h.kind)));
                }
                continue;
            }
            let item: LabeledQuery = serde_json::from_str(&line).map_err(|e| fmt(i + 1, e.to_string()))?;
            if !pool.insert(item) {
                return Err(fmt(i + 1, "duplicate item".into()));
            }
        }
        Ok(pool)
    }
}

impl FromIterator<LabeledQuery> for Pool {
    fn from_iter<I: IntoIterator<Item = LabeledQuery>>(iter: I) -> Self {
        let mut pool = Pool::new();
        for item in iter {
            pool.insert(item);
        }
        pool
    }
}
