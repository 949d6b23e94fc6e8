//! Human review over a pool, backed by an append-only revision log.
//!
//! Every accepted change is appended to the log before it becomes visible.
//! Reopening replays the log over the base pool. Concurrent edits use
//! first-writer-wins: a review must name the item revision it was based on
//! and is rejected with a conflict if another review landed first.

use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use super::{io_err, DatasetError, LabeledQuery, Pool, Provenance, Review, ReviewAction};
use crate::taxonomy::Taxonomy;

pub const ANNOTATION_SCHEMA: &str = "tacos.annotation";

#[derive(Debug, thiserror::Error)]
pub enum AnnotationError {
    #[error("unknown item {0:?}")]
    UnknownItem(String),
    #[error("item {item_id:?} is at revision {current}, request was based on {expected}")]
    Conflict {
        item_id: String,
        expected: u64,
        current: u64,
    },
    #[error("invalid review: {0}")]
    Invalid(String),
    #[error(transparent)]
    Storage(#[from] DatasetError),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReviewRequest {
    pub action: ReviewAction,
    pub expected_revision: u64,
    /// New label for `relabeled`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label_id: Option<String>,
    /// New text for `edited`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub text: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RevisionKind {
    Add {
        item: LabeledQuery,
    },
    Review {
        item_id: String,
        annotator_id: String,
        #[serde(flatten)]
        request: ReviewRequest,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Revision {
    pub seq: u64,
    pub timestamp: DateTime<Utc>,
    #[serde(flatten)]
    pub kind: RevisionKind,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ItemFilter {
    #[serde(default)]
    pub provenance: Option<Provenance>,
    #[serde(default)]
    pub label_id: Option<String>,
    /// Only items not yet human-reviewed.
    #[serde(default)]
    pub pending: bool,
    #[serde(default)]
    pub include_removed: bool,
    #[serde(default)]
    pub offset: usize,
    #[serde(default)]
    pub limit: Option<usize>,
}

impl ItemFilter {
    fn matches(&self, item: &LabeledQuery) -> bool {
        (self.include_removed || !item.is_removed())
            && self.provenance.is_none_or(|p| item.provenance == p)
            && self.label_id.as_ref().is_none_or(|l| item.label_id.as_ref() == Some(l))
            && (!self.pending || item.provenance != Provenance::HumanReviewed)
    }
}

#[derive(Debug)]
pub struct AnnotationStore {
    taxonomy: Taxonomy,
    pool: Pool,
    log_path: Option<PathBuf>,
    log: Option<File>,
    next_seq: u64,
}

impl AnnotationStore {
    /// Store without persistence.
    pub fn in_memory(taxonomy: Taxonomy, pool: Pool) -> Self {
        Self {
            taxonomy,
            pool,
            log_path: None,
            log: None,
            next_seq: 0,
        }
    }

    /// Opens `log_path` over `base`, replaying any revisions already in it.
    pub fn open(taxonomy: Taxonomy, base: Pool, log_path: impl AsRef<Path>) -> Result<Self, AnnotationError> {
        let path = log_path.as_ref();
        let mut store = Self::in_memory(taxonomy, base);
        if path.exists() {
            for rev in read_log(path)? {
                if rev.seq != store.next_seq {
                    return Err(AnnotationError::Invalid(format!(
                        "revision log out of sequence at {} (expected {})",
                        rev.seq, store.next_seq
                    )));
                }
                store.apply_revision(&rev)?;
                store.next_seq += 1;
            }
        }
        let fresh = !path.exists() || std::fs::metadata(path).map(|m| m.len() == 0).unwrap_or(true);
        let mut file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(io_err(path))
            .map_err(AnnotationError::from)?;
        if fresh {
            let header = serde_json::json!({"schema": ANNOTATION_SCHEMA, "version": 1});
            writeln!(file, "{header}").map_err(io_err(path)).map_err(AnnotationError::from)?;
        }
        store.log = Some(file);
        store.log_path = Some(path.to_path_buf());
        Ok(store)
    }

    pub fn taxonomy(&self) -> &Taxonomy {
        &self.taxonomy
    }

    pub fn pool(&self) -> &Pool {
        &self.pool
    }

    pub fn get(&self, id: &str) -> Option<&LabeledQuery> {
        self.pool.get(id)
    }

    pub fn revisions(&self) -> u64 {
        self.next_seq
    }

    pub fn list(&self, filter: &ItemFilter) -> Vec<&LabeledQuery> {
        self.pool
            .iter()
            .filter(|i| filter.matches(i))
            .skip(filter.offset)
            .take(filter.limit.unwrap_or(usize::MAX))
            .collect()
    }

    /// Adds new items, skipping duplicates. Returns the ids that were added.
    pub fn add(&mut self, items: Vec<LabeledQuery>) -> Result<Vec<String>, AnnotationError> {
        let mut added = Vec::new();
        for mut item in items {
            if item.text.trim().is_empty() {
                return Err(AnnotationError::Invalid("empty text".into()));
            }
            if let Some(l) = &item.label_id {
                if !self.taxonomy.contains(l) {
                    return Err(AnnotationError::Invalid(format!("unknown label {l:?}")));
                }
            }
            // ids are always content-derived here
            item = LabeledQuery {
                id: crate::text::content_id(&item.text),
                text: crate::text::normalize(&item.text),
                revision: 0,
                reviews: Vec::new(),
                ..item
            };
            if self.pool.get(&item.id).is_some() || self.pool.contains_text(&item.text) {
                continue;
            }
            let id = item.id.clone();
            self.commit(RevisionKind::Add { item })?;
            added.push(id);
        }
        Ok(added)
    }

    /// Applies one review. Returns the updated item.
    pub fn apply(
        &mut self,
        item_id: &str,
        annotator_id: &str,
        request: ReviewRequest,
    ) -> Result<LabeledQuery, AnnotationError> {
        if annotator_id.trim().is_empty() {
            return Err(AnnotationError::Invalid("annotator id is required".into()));
        }
        self.check_review(item_id, &request)?;
        self.commit(RevisionKind::Review {
            item_id: item_id.to_string(),
            annotator_id: annotator_id.to_string(),
            request,
        })?;
        Ok(self.pool.get(item_id).expect("checked above").clone())
    }

    fn check_review(&self, item_id: &str, req: &ReviewRequest) -> Result<(), AnnotationError> {
        let item = self
            .pool
            .get(item_id)
            .ok_or_else(|| AnnotationError::UnknownItem(item_id.to_string()))?;
        if item.revision != req.expected_revision {
            return Err(AnnotationError::Conflict {
                item_id: item_id.to_string(),
                expected: req.expected_revision,
                current: item.revision,
            });
        }
        if item.is_removed() {
            return Err(AnnotationError::Invalid("item has been removed".into()));
        }
        if !item.provenance.can_advance_to(Provenance::HumanReviewed) {
            return Err(AnnotationError::Invalid(format!("cannot review a {:?} item", item.provenance)));
        }
        match req.action {
            ReviewAction::Confirmed if item.label_id.is_none() => {
                Err(AnnotationError::Invalid("cannot confirm an unlabeled item".into()))
            }
            ReviewAction::Relabeled => match &req.label_id {
                Some(l) if self.taxonomy.contains(l) => Ok(()),
                Some(l) => Err(AnnotationError::Invalid(format!("unknown label {l:?}"))),
                None => Err(AnnotationError::Invalid("relabel needs label_id".into())),
            },
            ReviewAction::Edited => match &req.text {
                Some(t) if t.trim().is_empty() => Err(AnnotationError::Invalid("edited text is empty".into())),
                Some(t) => {
                    if self.pool.contains_text(t) && crate::text::normalize(t) != item.text {
                        Err(AnnotationError::Invalid("edited text duplicates another item".into()))
                    } else {
                        Ok(())
                    }
                }
                None => Err(AnnotationError::Invalid("edit needs text".into())),
            },
            _ => Ok(()),
        }
    }

    fn commit(&mut self, kind: RevisionKind) -> Result<(), AnnotationError> {
        let rev = Revision {
            seq: self.next_seq,
            timestamp: Utc::now(),
            kind,
        };
        if let (Some(file), Some(path)) = (self.log.as_mut(), self.log_path.as_ref()) {
            let line = serde_json::to_string(&rev).expect("revision serializes");
            writeln!(file, "{line}")
                .and_then(|_| file.flush())
                .map_err(io_err(path))?;
        }
        self.apply_revision(&rev)?;
        self.next_seq += 1;
        Ok(())
    }

    fn apply_revision(&mut self, rev: &Revision) -> Result<(), AnnotationError> {
        match &rev.kind {
            RevisionKind::Add { item } => {
                if !self.pool.insert(item.clone()) {
                    return Err(AnnotationError::Invalid(format!("revision {} re-adds {}", rev.seq, item.id)));
                }
            }
            RevisionKind::Review {
                item_id,
                annotator_id,
                request,
            } => {
                self.check_review(item_id, request)?;
                if request.action == ReviewAction::Edited {
                    let text = request.text.as_deref().expect("checked");
                    self.pool.set_text(item_id, text);
                }
                let item = self.pool.get_mut(item_id).expect("checked");
                if request.action == ReviewAction::Relabeled {
                    item.label_id = request.label_id.clone();
                }
                item.provenance = Provenance::HumanReviewed;
                item.labeling_failed = false;
                item.revision += 1;
                item.reviews.push(Review {
                    annotator_id: annotator_id.clone(),
                    action: request.action,
                    timestamp: rev.timestamp,
                });
            }
        }
        Ok(())
    }
}

/// Reads a revision log, checking its header.
pub fn read_log(path: &Path) -> Result<Vec<Revision>, DatasetError> {
    let file = File::open(path).map_err(io_err(path))?;
    let fmt = |line: usize, message: String| DatasetError::Format {
        path: path.display().to_string(),
        line,
        message,
    };
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(io_err(path))?;
        if line.trim().is_empty() {
            continue;
        }
        if i == 0 {
            let v: serde_json::Value = serde_json::from_str(&line).map_err(|e| fmt(1, e.to_string()))?;
            if v.get("schema").and_then(|s| s.as_str()) != Some(ANNOTATION_SCHEMA) {
                return Err(fmt(1, "not an annotation log".into()));
            }
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| fmt(i + 1, e.to_string()))?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn store() -> (AnnotationStore, Vec<String>) {
        let pool: Pool = ["how do i book", "what is aspirin", "asdf qwer"]
            .iter()
            .map(|t| LabeledQuery::new(t, "t", Provenance::LlmLabeled).with_label("general_inquiry"))
            .collect();
        let ids = pool.iter().map(|i| i.id.clone()).collect();
        (AnnotationStore::in_memory(Taxonomy::canonical(), pool), ids)
    }

    fn req(action: ReviewAction, rev: u64) -> ReviewRequest {
        ReviewRequest {
            action,
            expected_revision: rev,
            label_id: None,
            text: None,
        }
    }

    #[test]
    fn second_writer_conflicts() {
        let (mut s, ids) = store();
        let relabel = ReviewRequest {
            label_id: Some("app_inquiry".into()),
            ..req(ReviewAction::Relabeled, 0)
        };
        let updated = s.apply(&ids[0], "ann-1", relabel.clone()).unwrap();
        assert_eq!(updated.revision, 1);
        assert_eq!(updated.provenance, Provenance::HumanReviewed);
        let err = s.apply(&ids[0], "ann-2", req(ReviewAction::Confirmed, 0)).unwrap_err();
        assert!(matches!(err, AnnotationError::Conflict { current: 1, expected: 0, .. }));
        assert_eq!(s.get(&ids[0]).unwrap().label_id.as_deref(), Some("app_inquiry"));
    }

    #[test]
    fn removed_items_are_terminal_and_hidden() {
        let (mut s, ids) = store();
        s.apply(&ids[2], "a", req(ReviewAction::Removed, 0)).unwrap();
        assert!(s.apply(&ids[2], "a", req(ReviewAction::Confirmed, 1)).is_err());
        assert_eq!(s.list(&ItemFilter::default()).len(), 2);
        assert_eq!(
            s.list(&ItemFilter {
                include_removed: true,
                ..Default::default()
            })
            .len(),
            3
        );
    }

    #[test]
    fn validation_rejects_bad_reviews() {
        let (mut s, ids) = store();
        let bad_label = ReviewRequest {
            label_id: Some("nope".into()),
            ..req(ReviewAction::Relabeled, 0)
        };
        assert!(matches!(s.apply(&ids[0], "a", bad_label), Err(AnnotationError::Invalid(_))));
        let dup_text = ReviewRequest {
            text: Some("what is  aspirin".into()),
            ..req(ReviewAction::Edited, 0)
        };
        assert!(matches!(s.apply(&ids[0], "a", dup_text), Err(AnnotationError::Invalid(_))));
        assert!(matches!(s.apply("missing", "a", req(ReviewAction::Confirmed, 0)), Err(AnnotationError::UnknownItem(_))));
        assert!(s.apply(&ids[0], "", req(ReviewAction::Confirmed, 0)).is_err());
        assert_eq!(s.revisions(), 0);
    }

    #[test]
    fn log_replays_to_same_state() {
        let dir = tempfile::tempdir().unwrap();
        let log = dir.path().join("reviews.jsonl");
        let (base, ids) = {
            let (s, ids) = store();
            (s.pool().clone(), ids)
        };
        let mut s = AnnotationStore::open(Taxonomy::canonical(), base.clone(), &log).unwrap();
        s.apply(
            &ids[1],
            "a",
            ReviewRequest {
                text: Some("what is ibuprofen".into()),
                ..req(ReviewAction::Edited, 0)
            },
        )
        .unwrap();
        s.apply(&ids[2], "b", req(ReviewAction::Removed, 0)).unwrap();
        let added = s
            .add(vec![LabeledQuery::new("new one", "ui", Provenance::Collected)])
            .unwrap();
        assert_eq!(added.len(), 1);
        let expected = s.pool().clone();
        drop(s);

        let reopened = AnnotationStore::open(Taxonomy::canonical(), base, &log).unwrap();
        assert_eq!(reopened.pool(), &expected);
        assert_eq!(reopened.revisions(), 3);
        assert_eq!(reopened.get(&ids[1]).unwrap().text, "what is ibuprofen");
    }
}
