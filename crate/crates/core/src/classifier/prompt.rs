//! Few-shot classification prompts and response parsing.
//!
//! Exemplars are stratified round-robin across classes. With `k` total shots
//! over `n` classes every class gets `k / n` exemplars and `k % n` classes,
//! chosen by a seeded shuffle, get one more. Per-class draws are prefixes of
//! a seeded permutation that does not depend on `k`, so the exemplar list for
//! `k + 1` extends the list for `k` by exactly one line.

use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::taxonomy::Taxonomy;
use crate::text::normalize;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Exemplar {
    pub text: String,
    pub label_id: String,
}

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum PromptError {
    #[error("class {label:?} needs {needed} exemplars but the pool has {available}")]
    InsufficientExemplars {
        label: String,
        needed: usize,
        available: usize,
    },
    #[error("response {0:?} does not name exactly one class")]
    NoUniqueMatch(String),
}

pub struct PromptSpec<'a> {
    pub taxonomy: &'a Taxonomy,
    /// Total number of exemplars.
    pub shots: usize,
    pub seed: u64,
    pub pool: &'a [Exemplar],
    pub locale: Option<&'a str>,
}

/// A rendered prompt awaiting its target query.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Prompt {
    preamble: String,
    shots: usize,
}

const QUERY_PREFIX: &str = "User query: ";

impl Prompt {
    pub fn preamble(&self) -> &str {
        &self.preamble
    }

    pub fn shots(&self) -> usize {
        self.shots
    }

    /// Full prompt text with the query in its slot.
    pub fn render(&self, query: &str) -> String {
        format!("{}{QUERY_PREFIX}{}", self.preamble, normalize(query))
    }
}

/// Draws `k` exemplars stratified across the taxonomy's classes.
pub fn select_exemplars<'p>(
    taxonomy: &Taxonomy,
    pool: &'p [Exemplar],
    k: usize,
    seed: u64,
) -> Result<Vec<&'p Exemplar>, PromptError> {
    let n = taxonomy.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut per_class: Vec<Vec<&Exemplar>> = vec![Vec::new(); n];
    for ex in pool {
        if let Some(i) = taxonomy.index_of(&ex.label_id) {
            per_class[i].push(ex);
        }
    }
    for bucket in &mut per_class {
        // independent of pool order
        bucket.sort_by(|a, b| a.text.cmp(&b.text));
        bucket.dedup_by(|a, b| a.text == b.text);
        bucket.shuffle(&mut rng);
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);

    let (base, extra) = (k / n, k % n);
    let mut quota = vec![base; n];
    for &c in &order[..extra] {
        quota[c] += 1;
    }
    for (c, &q) in quota.iter().enumerate() {
        if per_class[c].len() < q {
            return Err(PromptError::InsufficientExemplars {
                label: taxonomy.leaves()[c].id.clone(),
                needed: q,
                available: per_class[c].len(),
            });
        }
    }
    let rounds = quota.iter().copied().max().unwrap_or(0);
    let mut out = Vec::with_capacity(k);
    for round in 0..rounds {
        for &c in &order {
            if let Some(&e) = per_class[c].get(round).filter(|_| quota[c] > round) {
                out.push(e);
            }
        }
    }
    Ok(out)
}

/// Builds the classification prompt. Pure in its inputs.
pub fn build_prompt(spec: &PromptSpec<'_>) -> Result<Prompt, PromptError> {
    let t = spec.taxonomy;
    let locale = spec.locale.unwrap_or(&t.default_locale);
    let exemplars = select_exemplars(t, spec.pool, spec.shots, spec.seed)?;
    let example_name = &t.leaves()[0].display_name;

    let mut s = String::new();
    let _ = writeln!(
        s,
        "You are a classification assistant for a clinical chatbot. Your job is to classify a user query into exactly one of {} predefined categories.",
        t.len()
    );
    s.push_str("The classification must be based on the intent and nature of the user's input.\n");
    let _ = writeln!(
        s,
        "Return only the class name (e.g., \"{example_name}\") without explanation."
    );
    s.push_str("Refer strictly to the following definitions:\n\n");
    for (i, leaf) in t.leaves().iter().enumerate() {
        let _ = writeln!(
            s,
            "{}. {}: {}",
            i + 1,
            leaf.id,
            leaf.prompt_definition_in(locale, &t.default_locale)
        );
    }
    if !exemplars.is_empty() {
        s.push_str("\nExamples:\n");
        for ex in &exemplars {
            let _ = writeln!(s, "\"{}\" \u{2192} {}", normalize(&ex.text), ex.label_id);
        }
    }
    s.push_str("\nClassify the following user query based on these definitions.\n");
    s.push_str("Output only the class name, no other text.\n\n");
    Ok(Prompt {
        preamble: s,
        shots: spec.shots,
    })
}

fn normalize_class_name(raw: &str) -> String {
    let trimmed = raw
        .trim()
        .trim_matches(|c: char| matches!(c, '"' | '\'' | '`' | '*'))
        .trim_end_matches(['.', '!', '?', ',', ';', ':'])
        .trim_matches(|c: char| matches!(c, '"' | '\'' | '`' | '*'))
        .trim();
    let mut out = String::with_capacity(trimmed.len());
    for c in trimmed.chars() {
        let c = if c.is_whitespace() || c == '-' { '_' } else { c };
        if c == '_' && out.ends_with('_') {
            continue;
        }
        out.extend(c.to_lowercase());
    }
    out
}

/// Maps a model response onto a class id, or fails. Never guesses.
pub fn parse_class_response(taxonomy: &Taxonomy, raw: &str) -> Result<String, PromptError> {
    let key = normalize_class_name(raw);
    let mut matches = taxonomy
        .leaves()
        .iter()
        .filter(|l| l.id == key || normalize_class_name(&l.display_name) == key);
    match (matches.next(), matches.next()) {
        (Some(leaf), None) => Ok(leaf.id.clone()),
        _ => Err(PromptError::NoUniqueMatch(raw.to_string())),
    }
}
