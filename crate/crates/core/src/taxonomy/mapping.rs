use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::Taxonomy;

#[derive(Debug, thiserror::Error)]
pub enum MappingError {
    #[error("mapping file line {line}: {message}")]
    Parse { line: u64, message: String },
    #[error("source id {0:?} appears more than once")]
    DuplicateSource(String),
    #[error("target id {0:?} is not in the target taxonomy")]
    UnknownTarget(String),
    #[error("source id {0:?} is not in the source taxonomy")]
    UnknownSource(String),
    #[error("source taxonomy leaf {0:?} has no mapping entry")]
    MissingSource(String),
    #[error("label {0:?} is not a mapping source")]
    Unmapped(String),
    #[error("score vector has {got} entries, source frame has {expected}")]
    ScoreArity { expected: usize, got: usize },
    #[error("io error reading {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// Total map from source label ids onto target label ids.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelMapping {
    pub name: String,
    entries: BTreeMap<String, String>,
}

#[derive(Deserialize)]
struct Row {
    source_id: String,
    target_id: String,
}

impl LabelMapping {
    /// Builds a mapping and checks its targets against `target`.
    pub fn new<I>(name: &str, pairs: I, target: &Taxonomy) -> Result<Self, MappingError>
    where
        I: IntoIterator<Item = (String, String)>,
    {
        let mut entries = BTreeMap::new();
        for (source, dest) in pairs {
            if !target.contains(&dest) {
                return Err(MappingError::UnknownTarget(dest));
            }
            if entries.insert(source.clone(), dest).is_some() {
                return Err(MappingError::DuplicateSource(source));
            }
        }
        Ok(Self {
            name: name.to_string(),
            entries,
        })
    }

    pub fn identity(taxonomy: &Taxonomy) -> Self {
        Self {
            name: "identity".into(),
            entries: taxonomy
                .ids()
                .map(|id| (id.to_string(), id.to_string()))
                .collect(),
        }
    }

    /// Parses the two-column `source_id,target_id` format.
    pub fn parse(name: &str, text: &str, target: &Taxonomy) -> Result<Self, MappingError> {
        let mut reader = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .comment(Some(b'#'))
            .from_reader(text.as_bytes());
        let mut pairs = Vec::new();
        for row in reader.deserialize::<Row>() {
            let row = row.map_err(|e| MappingError::Parse {
                line: e.position().map_or(0, |p| p.line()),
                message: e.to_string(),
            })?;
            pairs.push((row.source_id, row.target_id));
        }
        Self::new(name, pairs, target)
    }

    pub fn load_file(path: impl AsRef<Path>, target: &Taxonomy) -> Result<Self, MappingError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| MappingError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let name = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "mapping".into());
        Self::parse(&name, &text, target)
    }

    /// The embedded separate-toxic to canonical mapping.
    pub fn separate_to_total(target: &Taxonomy) -> Result<Self, MappingError> {
        Self::parse("separate_to_total", super::SEPARATE_TO_TOTAL_MAPPING, target)
    }

    /// Checks that every leaf of `source` is mapped and nothing else is.
    pub fn check_source(&self, source: &Taxonomy) -> Result<(), MappingError> {
        for id in source.ids() {
            if !self.entries.contains_key(id) {
                return Err(MappingError::MissingSource(id.to_string()));
            }
        }
        if let Some(extra) = self.entries.keys().find(|k| !source.contains(k)) {
            return Err(MappingError::UnknownSource(extra.clone()));
        }
        Ok(())
    }

    pub fn entries(&self) -> &BTreeMap<String, String> {
        &self.entries
    }

    pub fn map(&self, label: &str) -> Result<&str, MappingError> {
        self.entries
            .get(label)
            .map(String::as_str)
            .ok_or_else(|| MappingError::Unmapped(label.to_string()))
    }

    /// Element-wise substitution; order and length are preserved.
    pub fn collapse_labels<S: AsRef<str>>(&self, labels: &[S]) -> Result<Vec<String>, MappingError> {
        labels
            .iter()
            .map(|l| self.map(l.as_ref()).map(str::to_string))
            .collect()
    }

    /// Sums source-frame scores into the target frame.
    pub fn collapse_scores(
        &self,
        source: &Taxonomy,
        target: &Taxonomy,
        scores: &[f64],
    ) -> Result<Vec<f64>, MappingError> {
        if scores.len() != source.len() {
            return Err(MappingError::ScoreArity {
                expected: source.len(),
                got: scores.len(),
            });
        }
        let mut out = vec![0.0; target.len()];
        for (leaf, &s) in source.leaves().iter().zip(scores) {
            let dest = self.map(&leaf.id)?;
            let j = target
                .index_of(dest)
                .ok_or_else(|| MappingError::UnknownTarget(dest.to_string()))?;
            out[j] += s;
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_leaves_labels_unchanged() {
        let t = Taxonomy::canonical();
        let m = LabelMapping::identity(&t);
        let labels: Vec<String> = t.ids().map(str::to_string).collect();
        assert_eq!(m.collapse_labels(&labels).unwrap(), labels);
    }

    #[test]
    fn separate_subtypes_collapse_to_single_toxic_label() {
        let total = Taxonomy::canonical();
        let separate = Taxonomy::separate_toxic();
        let m = LabelMapping::separate_to_total(&total).unwrap();
        m.check_source(&separate).unwrap();
        let toxic: Vec<&str> = separate.ids().filter(|i| i.starts_with("toxic_")).collect();
        assert_eq!(toxic.len(), 9);
        let out = m.collapse_labels(&toxic).unwrap();
        assert_eq!(out, vec!["crime_or_toxic".to_string(); 9]);
    }

    #[test]
    fn unmapped_label_errors() {
        let t = Taxonomy::canonical();
        let m = LabelMapping::identity(&t);
        assert!(matches!(
            m.collapse_labels(&["toxic_male"]),
            Err(MappingError::Unmapped(_))
        ));
    }

    #[test]
    fn parse_rejects_duplicates_and_unknown_targets() {
        let t = Taxonomy::canonical();
        let dup = "source_id,target_id\na,empathy\na,empathy\n";
        assert!(matches!(
            LabelMapping::parse("d", dup, &t),
            Err(MappingError::DuplicateSource(_))
        ));
        let bad = "source_id,target_id\na,nowhere\n";
        assert!(matches!(
            LabelMapping::parse("b", bad, &t),
            Err(MappingError::UnknownTarget(_))
        ));
    }

    #[test]
    fn collapse_scores_sums_subtypes() {
        let total = Taxonomy::canonical();
        let separate = Taxonomy::separate_toxic();
        let m = LabelMapping::separate_to_total(&total).unwrap();
        let mut scores = vec![0.0; separate.len()];
        for (i, id) in separate.ids().enumerate() {
            if id.starts_with("toxic_") {
                scores[i] = 0.0625;
            }
        }
        scores[separate.index_of("empathy").unwrap()] = 0.4375;
        let out = m.collapse_scores(&separate, &total, &scores).unwrap();
        assert_eq!(out[total.index_of("crime_or_toxic").unwrap()], 0.5625);
        assert_eq!(out[total.index_of("empathy").unwrap()], 0.4375);
        assert_eq!(out.iter().sum::<f64>(), 1.0);
    }
}
