//! The label hierarchy: loading, validation, tool derivation and subsetting.
//!
//! A taxonomy is a flat, ordered list of leaves. Each leaf carries its
//! position in the safety / clinicality / seeking hierarchy. Leaf order is
//! the index order used by score vectors and confusion matrices everywhere
//! else in the crate.

mod mapping;

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

pub use mapping::{LabelMapping, MappingError};

/// Canonical 21-leaf definition document, embedded at build time.
pub const CANONICAL_TAXONOMY: &str = include_str!("../../data/tacos.toml");

/// Separate toxic labeling scheme (29 leaves).
pub const SEPARATE_TOXIC_TAXONOMY: &str = include_str!("../../data/tacos_separate_toxic.toml");

/// Mapping from the separate toxic scheme back to the canonical leaves.
pub const SEPARATE_TO_TOTAL_MAPPING: &str = include_str!("../../data/separate_to_total.csv");

/// Ids of the eight safe/clinical/information-seeking leaves, canonical order.
pub const INFORMATION_SEEKING_IDS: [&str; 8] = [
    "general_inquiry",
    "patient_inquiry",
    "medical_inquiry",
    "app_inquiry",
    "patient_medical_inquiry",
    "patient_app_inquiry",
    "medical_app_inquiry",
    "patient_medical_app_inquiry",
];

#[derive(Debug, thiserror::Error)]
pub enum TaxonomyError {
    #[error("parse error at {location}: {message}")]
    Parse { location: String, message: String },
    #[error("leaf #{index} ({id}): duplicate id, first defined at leaf #{first}")]
    DuplicateId { index: usize, id: String, first: usize },
    #[error("leaf #{index} ({id}): invalid path {path:?}: {reason}")]
    InvalidPath {
        index: usize,
        id: String,
        path: Vec<String>,
        reason: String,
    },
    #[error("leaf #{index} ({id}): {reason}")]
    InvalidLeaf {
        index: usize,
        id: String,
        reason: String,
    },
    #[error("taxonomy has no leaves")]
    Empty,
    #[error("unknown label id {0:?}")]
    UnknownLabel(String),
    #[error("subset is empty")]
    EmptySubset,
    #[error("not the canonical taxonomy: {0}")]
    NotCanonical(String),
    #[error("io error reading {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Safety {
    Safe,
    Unsafe,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Clinicality {
    Clinical,
    NonClinical,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Seeking {
    InformationSeeking,
    NonInformationSeeking,
    NotApplicable,
}

/// Position of a leaf in the hierarchy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct LabelPath {
    pub safety: Safety,
    pub clinicality: Clinicality,
    pub seeking: Seeking,
}

impl LabelPath {
    pub fn is_unsafe(&self) -> bool {
        self.safety == Safety::Unsafe
    }

    pub fn is_information_seeking(&self) -> bool {
        self.seeking == Seeking::InformationSeeking
    }

    /// Path segments as written in definition files.
    pub fn segments(&self) -> Vec<&'static str> {
        let mut out = vec![
            match self.safety {
                Safety::Safe => "safe",
                Safety::Unsafe => "unsafe",
            },
            match self.clinicality {
                Clinicality::Clinical => "clinical",
                Clinicality::NonClinical => "non_clinical",
            },
        ];
        match self.seeking {
            Seeking::InformationSeeking => out.push("information_seeking"),
            Seeking::NonInformationSeeking => out.push("non_information_seeking"),
            Seeking::NotApplicable => {}
        }
        out
    }

    fn parse(segments: &[String]) -> Result<Self, String> {
        let safety = match segments.first().map(String::as_str) {
            Some("safe") => Safety::Safe,
            Some("unsafe") => Safety::Unsafe,
            Some(other) => return Err(format!("unknown safety segment {other:?}")),
            None => return Err("path is empty".into()),
        };
        let clinicality = match segments.get(1).map(String::as_str) {
            Some("clinical") => Clinicality::Clinical,
            Some("non_clinical") => Clinicality::NonClinical,
            Some(other) => return Err(format!("unknown clinicality segment {other:?}")),
            None => return Err("missing clinicality segment".into()),
        };
        let seeking = match segments.get(2).map(String::as_str) {
            Some("information_seeking") => Seeking::InformationSeeking,
            Some("non_information_seeking") => Seeking::NonInformationSeeking,
            Some("not_applicable") | None => Seeking::NotApplicable,
            Some(other) => return Err(format!("unknown seeking segment {other:?}")),
        };
        if segments.len() > 3 {
            return Err("path has more than three segments".into());
        }
        let needs_seeking = safety == Safety::Safe && clinicality == Clinicality::Clinical;
        if needs_seeking && seeking == Seeking::NotApplicable {
            return Err("safe/clinical leaves must state information_seeking or non_information_seeking".into());
        }
        if !needs_seeking && seeking != Seeking::NotApplicable {
            return Err("seeking applies only to safe/clinical leaves".into());
        }
        Ok(Self {
            safety,
            clinicality,
            seeking,
        })
    }
}

impl fmt::Display for LabelPath {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.segments().join("/"))
    }
}

/// External source a query needs before it can be answered.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ToolRequirement {
    PatientRecord,
    MedicalKnowledge,
    AppApi,
}

impl ToolRequirement {
    pub const ALL: [ToolRequirement; 3] = [
        ToolRequirement::PatientRecord,
        ToolRequirement::MedicalKnowledge,
        ToolRequirement::AppApi,
    ];

    /// Token used for this requirement inside information-seeking ids.
    pub fn id_token(self) -> &'static str {
        match self {
            ToolRequirement::PatientRecord => "patient",
            ToolRequirement::MedicalKnowledge => "medical",
            ToolRequirement::AppApi => "app",
        }
    }
}

/// Result of [`Taxonomy::tool_requirements`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ToolSet {
    Tools(BTreeSet<ToolRequirement>),
    NotApplicable,
}

/// Parses an information-seeking id (`patient_app_inquiry`, `general_inquiry`)
/// into its tool subset. Tokens must appear in canonical order.
pub fn tools_from_inquiry_id(id: &str) -> Option<BTreeSet<ToolRequirement>> {
    let stem = id.strip_suffix("_inquiry")?;
    if stem == "general" {
        return Some(BTreeSet::new());
    }
    let mut out = BTreeSet::new();
    let mut next = 0usize;
    for token in stem.split('_') {
        let pos = ToolRequirement::ALL[next..]
            .iter()
            .position(|t| t.id_token() == token)?;
        out.insert(ToolRequirement::ALL[next + pos]);
        next += pos + 1;
    }
    Some(out)
}

/// Id of the information-seeking leaf for a tool subset.
pub fn inquiry_id_for_tools(tools: &BTreeSet<ToolRequirement>) -> String {
    if tools.is_empty() {
        return "general_inquiry".to_string();
    }
    let parts: Vec<&str> = ToolRequirement::ALL
        .iter()
        .filter(|t| tools.contains(t))
        .map(|t| t.id_token())
        .collect();
    format!("{}_inquiry", parts.join("_"))
}

/// Locale-keyed text. The taxonomy's default locale is always present.
pub type Localized<T> = BTreeMap<String, T>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassLabel {
    pub id: String,
    pub display_name: String,
    pub path: LabelPath,
    pub description: Localized<String>,
    pub examples: Localized<Vec<String>>,
    /// Shorter definition used in classification prompts, if it differs.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub prompt_definition: Localized<String>,
}

impl ClassLabel {
    pub fn description_in<'a>(&'a self, locale: &str, default_locale: &str) -> &'a str {
        self.description
            .get(locale)
            .or_else(|| self.description.get(default_locale))
            .map(String::as_str)
            .unwrap_or_default()
    }

    pub fn examples_in<'a>(&'a self, locale: &str, default_locale: &str) -> &'a [String] {
        self.examples
            .get(locale)
            .or_else(|| self.examples.get(default_locale))
            .map(Vec::as_slice)
            .unwrap_or_default()
    }

    /// Prompt definition, falling back to the description.
    pub fn prompt_definition_in<'a>(&'a self, locale: &str, default_locale: &str) -> &'a str {
        self.prompt_definition
            .get(locale)
            .or_else(|| self.prompt_definition.get(default_locale))
            .map(String::as_str)
            .unwrap_or_else(|| self.description_in(locale, default_locale))
    }
}

/// An immutable, validated label hierarchy.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Taxonomy {
    pub version: String,
    pub default_locale: String,
    /// Hex SHA-256 of the definition document bytes.
    pub source_digest: String,
    leaves: Vec<ClassLabel>,
    #[serde(skip)]
    index: BTreeMap<String, usize>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawDocument {
    version: String,
    default_locale: String,
    #[serde(default)]
    leaf: Vec<RawLeaf>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawLeaf {
    id: Option<String>,
    display_name: Option<String>,
    path: Option<Vec<String>>,
    #[serde(default)]
    description: Localized<String>,
    #[serde(default)]
    examples: Localized<Vec<String>>,
    #[serde(default)]
    prompt_definition: Localized<String>,
}

fn is_snake_case_id(id: &str) -> bool {
    !id.is_empty()
        && id
            .bytes()
            .all(|b| b.is_ascii_lowercase() || b.is_ascii_digit() || b == b'_')
        && !id.starts_with('_')
        && !id.ends_with('_')
        && !id.contains("__")
}

fn line_col(text: &str, offset: usize) -> (usize, usize) {
    let before = &text[..offset.min(text.len())];
    let line = before.matches('\n').count() + 1;
    let col = before.rfind('\n').map_or(before.len(), |nl| before.len() - nl - 1) + 1;
    (line, col)
}

impl Taxonomy {
    /// Parses and validates a definition document.
    pub fn load(document: &str) -> Result<Self, TaxonomyError> {
        let raw: RawDocument = toml::from_str(document).map_err(|e| {
            let location = e
                .span()
                .map(|s| {
                    let (line, col) = line_col(document, s.start);
                    format!("line {line}, column {col}")
                })
                .unwrap_or_else(|| "document".to_string());
            TaxonomyError::Parse {
                location,
                message: e.message().to_string(),
            }
        })?;
        if raw.leaf.is_empty() {
            return Err(TaxonomyError::Empty);
        }
        let mut leaves = Vec::with_capacity(raw.leaf.len());
        let mut index = BTreeMap::new();
        for (i, leaf) in raw.leaf.into_iter().enumerate() {
            let invalid = |id: &str, reason: &str| TaxonomyError::InvalidLeaf {
                index: i,
                id: id.to_string(),
                reason: reason.to_string(),
            };
            let id = leaf.id.ok_or_else(|| invalid("?", "missing id"))?;
            if !is_snake_case_id(&id) {
                return Err(invalid(&id, "id must be lowercase snake_case"));
            }
            if let Some(&first) = index.get(&id) {
                return Err(TaxonomyError::DuplicateId { index: i, id, first });
            }
            let segments = leaf.path.ok_or_else(|| invalid(&id, "missing path"))?;
            let path = LabelPath::parse(&segments).map_err(|reason| TaxonomyError::InvalidPath {
                index: i,
                id: id.clone(),
                path: segments.clone(),
                reason,
            })?;
            if path.is_information_seeking() && tools_from_inquiry_id(&id).is_none() {
                return Err(TaxonomyError::InvalidPath {
                    index: i,
                    id: id.clone(),
                    path: segments,
                    reason: "information_seeking leaf ids must name a tool subset, e.g. patient_app_inquiry".into(),
                });
            }
            let description_ok = leaf
                .description
                .get(&raw.default_locale)
                .is_some_and(|d| !d.trim().is_empty());
            if !description_ok {
                return Err(invalid(&id, "missing description in the default locale"));
            }
            let examples_ok = leaf
                .examples
                .get(&raw.default_locale)
                .is_some_and(|e| e.iter().any(|x| !x.trim().is_empty()));
            if !examples_ok {
                return Err(invalid(&id, "needs at least one example in the default locale"));
            }
            let display_name = leaf
                .display_name
                .filter(|d| !d.trim().is_empty())
                .ok_or_else(|| invalid(&id, "missing display_name"))?;
            index.insert(id.clone(), i);
            leaves.push(ClassLabel {
                id,
                display_name,
                path,
                description: leaf.description,
                examples: leaf.examples,
                prompt_definition: leaf.prompt_definition,
            });
        }
        Ok(Self {
            version: raw.version,
            default_locale: raw.default_locale,
            source_digest: crate::text::sha256_hex(document.as_bytes()),
            leaves,
            index,
        })
    }

    pub fn load_file(path: impl AsRef<Path>) -> Result<Self, TaxonomyError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| TaxonomyError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::load(&text)
    }

    /// The embedded canonical 21-leaf taxonomy.
    pub fn canonical() -> Self {
        Self::load(CANONICAL_TAXONOMY).expect("embedded canonical taxonomy is valid")
    }

    /// The embedded 29-leaf separate toxic scheme.
    pub fn separate_toxic() -> Self {
        Self::load(SEPARATE_TOXIC_TAXONOMY).expect("embedded separate-toxic taxonomy is valid")
    }

    pub fn leaves(&self) -> &[ClassLabel] {
        &self.leaves
    }

    pub fn len(&self) -> usize {
        self.leaves.len()
    }

    pub fn is_empty(&self) -> bool {
        self.leaves.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.leaves.iter().map(|l| l.id.as_str())
    }

    /// Canonical index of a label.
    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.index.get(id).copied()
    }

    pub fn get(&self, id: &str) -> Option<&ClassLabel> {
        self.index_of(id).map(|i| &self.leaves[i])
    }

    pub fn contains(&self, id: &str) -> bool {
        self.index.contains_key(id)
    }

    pub fn require(&self, id: &str) -> Result<&ClassLabel, TaxonomyError> {
        self.get(id)
            .ok_or_else(|| TaxonomyError::UnknownLabel(id.to_string()))
    }

    pub fn tool_requirements(&self, label_id: &str) -> Result<ToolSet, TaxonomyError> {
        let leaf = self.require(label_id)?;
        if !leaf.path.is_information_seeking() {
            return Ok(ToolSet::NotApplicable);
        }
        let tools = tools_from_inquiry_id(&leaf.id).expect("validated at load");
        Ok(ToolSet::Tools(tools))
    }

    /// Sub-taxonomy over `leaf_ids`, keeping canonical relative order.
    pub fn restrict<S: AsRef<str>>(
        &self,
        leaf_ids: &[S],
        subset_name: &str,
    ) -> Result<Self, TaxonomyError> {
        if leaf_ids.is_empty() {
            return Err(TaxonomyError::EmptySubset);
        }
        let mut wanted = HashSet::new();
        for id in leaf_ids {
            let id = id.as_ref();
            self.require(id)?;
            wanted.insert(id);
        }
        if wanted.len() == self.len() {
            return Ok(self.clone());
        }
        let leaves: Vec<ClassLabel> = self
            .leaves
            .iter()
            .filter(|l| wanted.contains(l.id.as_str()))
            .cloned()
            .collect();
        let index = leaves
            .iter()
            .enumerate()
            .map(|(i, l)| (l.id.clone(), i))
            .collect();
        Ok(Self {
            version: format!("{}+{}", self.version, subset_name),
            default_locale: self.default_locale.clone(),
            source_digest: self.source_digest.clone(),
            leaves,
            index,
        })
    }

    /// The eight information-seeking leaves.
    pub fn information_seeking_subset(&self) -> Result<Self, TaxonomyError> {
        let ids: Vec<&str> = self
            .leaves
            .iter()
            .filter(|l| l.path.is_information_seeking())
            .map(|l| l.id.as_str())
            .collect();
        self.restrict(&ids, "information_seeking")
    }

    /// Leaf counts per hierarchy bucket, in bucket order.
    pub fn bucket_counts(&self) -> BTreeMap<LabelPath, usize> {
        let mut out = BTreeMap::new();
        for leaf in &self.leaves {
            *out.entry(leaf.path).or_insert(0) += 1;
        }
        out
    }

    /// Checks the structure of the full 21-leaf taxonomy.
    pub fn validate_canonical(&self) -> Result<(), TaxonomyError> {
        use Clinicality::*;
        use Safety::*;
        use Seeking::*;
        let expected = [
            (Unsafe, NonClinical, NotApplicable, 5),
            (Unsafe, Clinical, NotApplicable, 4),
            (Safe, NonClinical, NotApplicable, 2),
            (Safe, Clinical, NonInformationSeeking, 2),
            (Safe, Clinical, InformationSeeking, 8),
        ];
        if self.len() != 21 {
            return Err(TaxonomyError::NotCanonical(format!(
                "expected 21 leaves, found {}",
                self.len()
            )));
        }
        let counts = self.bucket_counts();
        for (safety, clinicality, seeking, n) in expected {
            let path = LabelPath {
                safety,
                clinicality,
                seeking,
            };
            let got = counts.get(&path).copied().unwrap_or(0);
            if got != n {
                return Err(TaxonomyError::NotCanonical(format!(
                    "bucket {path}: expected {n} leaves, found {got}"
                )));
            }
        }
        let seeking: BTreeSet<BTreeSet<ToolRequirement>> = self
            .leaves
            .iter()
            .filter_map(|l| match self.tool_requirements(&l.id) {
                Ok(ToolSet::Tools(t)) => Some(t),
                _ => None,
            })
            .collect();
        if seeking.len() != 8 {
            return Err(TaxonomyError::NotCanonical(
                "information-seeking leaves do not cover every tool subset".into(),
            ));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn leaf(id: &str, path: &str) -> String {
        format!(
            "[[leaf]]\nid = \"{id}\"\ndisplay_name = \"{id}\"\npath = {path}\ndescription.en = \"d\"\nexamples.en = [\"e\"]\n"
        )
    }

    fn doc(leaves: &[String]) -> String {
        format!("version = \"t\"\ndefault_locale = \"en\"\n{}", leaves.join("\n"))
    }

    #[test]
    fn canonical_has_21_leaves_in_document_order() {
        let t = Taxonomy::canonical();
        assert_eq!(t.len(), 21);
        assert_eq!(t.leaves()[0].id, "adversary");
        assert_eq!(t.leaves()[20].id, "patient_medical_app_inquiry");
        t.validate_canonical().unwrap();
    }

    #[test]
    fn duplicate_id_is_rejected_with_location() {
        let d = doc(&[
            leaf("empathy", "[\"safe\", \"clinical\", \"non_information_seeking\"]"),
            leaf("empathy", "[\"safe\", \"clinical\", \"non_information_seeking\"]"),
        ]);
        match Taxonomy::load(&d) {
            Err(TaxonomyError::DuplicateId { index, first, .. }) => {
                assert_eq!((index, first), (1, 0));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn invalid_path_combinations() {
        for path in [
            "[\"unsafe\", \"clinical\", \"information_seeking\"]",
            "[\"safe\", \"clinical\"]",
            "[\"safe\", \"non_clinical\", \"non_information_seeking\"]",
            "[\"maybe\", \"clinical\"]",
        ] {
            let d = doc(&[leaf("x", path)]);
            assert!(
                matches!(Taxonomy::load(&d), Err(TaxonomyError::InvalidPath { .. })),
                "{path}"
            );
        }
    }

    #[test]
    fn information_seeking_id_must_encode_tools() {
        let d = doc(&[leaf(
            "weather_inquiry",
            "[\"safe\", \"clinical\", \"information_seeking\"]",
        )]);
        assert!(matches!(
            Taxonomy::load(&d),
            Err(TaxonomyError::InvalidPath { .. })
        ));
    }

    #[test]
    fn parse_error_reports_line() {
        let err = Taxonomy::load("version = \"x\"\ndefault_locale = \n").unwrap_err();
        match err {
            TaxonomyError::Parse { location, .. } => assert!(location.contains("line 2"), "{location}"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn leaf_without_example_is_rejected() {
        let d = "version = \"t\"\ndefault_locale = \"en\"\n[[leaf]]\nid = \"a\"\ndisplay_name = \"A\"\npath = [\"safe\", \"non_clinical\"]\ndescription.en = \"d\"\n";
        assert!(matches!(
            Taxonomy::load(d),
            Err(TaxonomyError::InvalidLeaf { .. })
        ));
    }

    #[test]
    fn tool_requirements_examples() {
        let t = Taxonomy::canonical();
        assert_eq!(
            t.tool_requirements("patient_medical_app_inquiry").unwrap(),
            ToolSet::Tools(ToolRequirement::ALL.into_iter().collect())
        );
        assert_eq!(
            t.tool_requirements("general_inquiry").unwrap(),
            ToolSet::Tools(BTreeSet::new())
        );
        assert_eq!(t.tool_requirements("empathy").unwrap(), ToolSet::NotApplicable);
        assert!(matches!(
            t.tool_requirements("nope"),
            Err(TaxonomyError::UnknownLabel(_))
        ));
    }

    #[test]
    fn inquiry_ids_round_trip() {
        for id in INFORMATION_SEEKING_IDS {
            let tools = tools_from_inquiry_id(id).unwrap();
            assert_eq!(inquiry_id_for_tools(&tools), id);
        }
        assert!(tools_from_inquiry_id("app_patient_inquiry").is_none());
        assert!(tools_from_inquiry_id("patient_patient_inquiry").is_none());
    }

    #[test]
    fn restrict_keeps_canonical_order() {
        let t = Taxonomy::canonical();
        let sub = t
            .restrict(&["patient_inquiry", "general_inquiry", "self_harm"], "mixed")
            .unwrap();
        let ids: Vec<&str> = sub.ids().collect();
        assert_eq!(ids, ["self_harm", "general_inquiry", "patient_inquiry"]);
        assert!(sub.version.ends_with("+mixed"));

        let is8 = t.information_seeking_subset().unwrap();
        assert_eq!(is8.ids().collect::<Vec<_>>(), INFORMATION_SEEKING_IDS);

        let all: Vec<&str> = t.ids().collect();
        assert_eq!(t.restrict(&all, "all").unwrap(), t);

        let one = t.restrict(&["general_inquiry"], "one").unwrap();
        assert_eq!(one.len(), 1);
        assert_eq!(one.index_of("general_inquiry"), Some(0));

        assert!(matches!(
            t.restrict::<&str>(&[], "none"),
            Err(TaxonomyError::EmptySubset)
        ));
        assert!(matches!(
            t.restrict(&["bogus"], "x"),
            Err(TaxonomyError::UnknownLabel(_))
        ));
    }

    #[test]
    fn prompt_definition_falls_back_to_description() {
        let t = Taxonomy::canonical();
        let g = t.get("general_inquiry").unwrap();
        assert_eq!(
            g.prompt_definition_in("en", "en"),
            "General and simple medical questions seeking basic information."
        );
        let e = t.get("empathy").unwrap();
        assert_eq!(e.prompt_definition_in("ko", "en"), e.description_in("en", "en"));
    }

    #[test]
    fn separate_scheme_loads() {
        let s = Taxonomy::separate_toxic();
        assert_eq!(s.len(), 29);
        assert!(!s.contains("crime_or_toxic"));
        assert_eq!(s.ids().filter(|i| i.starts_with("toxic_")).count(), 9);
    }
}
