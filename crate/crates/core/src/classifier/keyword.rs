use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{one_hot, timed, ClassifyError, Classifier, Prediction, ScoreKind};
use crate::taxonomy::Taxonomy;
use crate::text::normalize;

pub const DEFAULT_KEYWORD_RULES: &str = include_str!("../../data/keyword_rules.toml");

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KeywordRule {
    pub label: String,
    pub phrases: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KeywordRules {
    pub fallback: String,
    #[serde(default, rename = "rule")]
    pub rules: Vec<KeywordRule>,
}

impl KeywordRules {
    pub fn parse(text: &str) -> Result<Self, ClassifyError> {
        toml::from_str(text).map_err(|e| ClassifyError::Config(format!("keyword rules: {e}")))
    }

    pub fn load_file(path: impl AsRef<Path>) -> Result<Self, ClassifyError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| ClassifyError::Config(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn default_rules() -> Self {
        Self::parse(DEFAULT_KEYWORD_RULES).expect("embedded keyword rules parse")
    }
}

/// Deterministic phrase-matching baseline with one-hot scores.
#[derive(Debug, Clone)]
pub struct KeywordClassifier {
    id: String,
    taxonomy: Taxonomy,
    fallback: usize,
    /// (leaf index, lowercased phrase)
    phrases: Vec<(usize, String)>,
}

impl KeywordClassifier {
    pub fn new(id: &str, taxonomy: Taxonomy, rules: &KeywordRules) -> Result<Self, ClassifyError> {
        let index = |label: &str| {
            taxonomy
                .index_of(label)
                .ok_or_else(|| ClassifyError::Config(format!("keyword rule label {label:?} not in taxonomy")))
        };
        let fallback = index(&rules.fallback)?;
        let mut phrases = Vec::new();
        for rule in &rules.rules {
            let i = index(&rule.label)?;
            for p in &rule.phrases {
                let p = normalize(p).to_lowercase();
                if !p.is_empty() {
                    phrases.push((i, p));
                }
            }
        }
        Ok(Self {
            id: id.to_string(),
            taxonomy,
            fallback,
            phrases,
        })
    }

    /// Baseline over the canonical taxonomy with the shipped rules.
    pub fn default_canonical() -> Self {
        Self::new("keyword", Taxonomy::canonical(), &KeywordRules::default_rules())
            .expect("default rules match the canonical taxonomy")
    }

    pub fn label_index(&self, text: &str) -> usize {
        let text = normalize(text).to_lowercase();
        let mut hits = vec![0u32; self.taxonomy.len()];
        for (i, phrase) in &self.phrases {
            if text.contains(phrase.as_str()) {
                hits[*i] += 1;
            }
        }
        let mut best = self.fallback;
        let mut best_hits = 0;
        for (i, &h) in hits.iter().enumerate() {
            if h > best_hits {
                best = i;
                best_hits = h;
            }
        }
        best
    }
}

impl Classifier for KeywordClassifier {
    fn id(&self) -> &str {
        &self.id
    }

    fn taxonomy(&self) -> &Taxonomy {
        &self.taxonomy
    }

    fn score_kind(&self) -> ScoreKind {
        ScoreKind::OneHot
    }

    fn classify(&self, text: &str) -> Result<Prediction, ClassifyError> {
        let (i, latency) = timed(|| self.label_index(text));
        Ok(Prediction {
            label_id: self.taxonomy.leaves()[i].id.clone(),
            scores: one_hot(self.taxonomy.len(), i),
            latency,
            backend_id: self.id.clone(),
        })
    }
}
