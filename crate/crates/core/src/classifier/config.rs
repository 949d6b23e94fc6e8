use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::{
    ChatClient, Classifier, ClassifyError, EncoderClassifier, Exemplar, KeywordClassifier, KeywordRules,
    NaiveBayesClassifier, PromptClassifier,
};
use crate::taxonomy::Taxonomy;

fn default_timeout() -> f64 {
    30.0
}
fn default_retries() -> u32 {
    2
}
fn default_in_flight() -> usize {
    8
}
fn default_alpha() -> f64 {
    1.0
}

/// Declarative backend description, as found in experiment and gateway configs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackendConfig {
    pub id: String,
    /// Restrict the taxonomy to these leaves, e.g. the 8 information-seeking classes.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub labels: Option<Vec<String>>,
    #[serde(flatten)]
    pub kind: BackendKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BackendKind {
    Keyword {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        rules: Option<PathBuf>,
    },
    Prompt {
        endpoint: String,
        model: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        credentials_env: Option<String>,
        #[serde(default)]
        shots: usize,
        #[serde(default)]
        seed: u64,
        /// Line-delimited `{text, label_id}` records to draw exemplars from.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        exemplars: Option<PathBuf>,
        #[serde(default = "default_timeout")]
        timeout_secs: f64,
        #[serde(default = "default_retries")]
        retries: u32,
        #[serde(default = "default_in_flight")]
        max_in_flight: usize,
    },
    Encoder {
        endpoint: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        credentials_env: Option<String>,
        #[serde(default = "default_timeout")]
        timeout_secs: f64,
        #[serde(default = "default_retries")]
        retries: u32,
        #[serde(default = "default_in_flight")]
        max_in_flight: usize,
    },
    NaiveBayes {
        /// Line-delimited `{text, label_id}` training records.
        training: PathBuf,
        #[serde(default = "default_alpha")]
        alpha: f64,
    },
}

impl BackendConfig {
    /// Resolves relative file references against `base`.
    pub fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        match &mut self.kind {
            BackendKind::Keyword { rules: Some(p) } => fix(p),
            BackendKind::Prompt { exemplars: Some(p), .. } => fix(p),
            BackendKind::NaiveBayes { training, .. } => fix(training),
            _ => {}
        }
    }
}

/// Reads `{text, label_id}` lines, skipping header lines and records without a label.
pub fn read_labeled_lines(path: &Path) -> Result<Vec<Exemplar>, ClassifyError> {
    let err = |e: String| ClassifyError::Config(format!("{}: {e}", path.display()));
    let file = std::fs::File::open(path).map_err(|e| err(e.to_string()))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| err(e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        let v: serde_json::Value =
            serde_json::from_str(&line).map_err(|e| err(format!("line {}: {e}", i + 1)))?;
        if v.get("schema").is_some() {
            continue;
        }
        let (Some(text), Some(label)) = (
            v.get("text").and_then(|t| t.as_str()),
            v.get("label_id").and_then(|t| t.as_str()),
        ) else {
            continue;
        };
        out.push(Exemplar {
            text: text.to_string(),
            label_id: label.to_string(),
        });
    }
    Ok(out)
}

/// Instantiates the configured backend over `taxonomy` (restricted to
/// `config.labels` when given).
pub fn build_backend(config: &BackendConfig, taxonomy: &Taxonomy) -> Result<Box<dyn Classifier>, ClassifyError> {
    let taxonomy = match &config.labels {
        Some(labels) => taxonomy
            .restrict(labels, &config.id)
            .map_err(|e| ClassifyError::Config(e.to_string()))?,
        None => taxonomy.clone(),
    };
    let id = config.id.as_str();
    Ok(match &config.kind {
        BackendKind::Keyword { rules } => {
            let rules = match rules {
                Some(p) => KeywordRules::load_file(p)?,
                None => KeywordRules::default_rules(),
            };
            Box::new(KeywordClassifier::new(id, taxonomy, &rules)?)
        }
        BackendKind::Prompt {
            endpoint,
            model,
            credentials_env,
            shots,
            seed,
            exemplars,
            timeout_secs,
            retries,
            max_in_flight,
        } => {
            let pool = match exemplars {
                Some(p) => read_labeled_lines(p)?,
                None => Vec::new(),
            };
            let client = ChatClient::new(
                endpoint,
                model,
                credentials_env.clone(),
                Duration::from_secs_f64(*timeout_secs),
                *retries,
                *max_in_flight,
            )?;
            Box::new(PromptClassifier::new(id, taxonomy, *shots, *seed, &pool, client)?)
        }
        BackendKind::Encoder {
            endpoint,
            credentials_env,
            timeout_secs,
            retries,
            max_in_flight,
        } => Box::new(EncoderClassifier::new(
            id,
            taxonomy,
            endpoint,
            credentials_env.clone(),
            Duration::from_secs_f64(*timeout_secs),
            *retries,
            *max_in_flight,
        )?),
        BackendKind::NaiveBayes { training, alpha } => {
            let data = read_labeled_lines(training)?;
            let pairs: Vec<(String, String)> = data
                .into_iter()
                .filter(|e| taxonomy.contains(&e.label_id))
                .map(|e| (e.text, e.label_id))
                .collect();
            Box::new(NaiveBayesClassifier::train(id, taxonomy, &pairs, *alpha)?)
        }
    })
}
