use std::collections::BTreeMap;
use std::path::Path;

use serde::Deserialize;

pub const DEFAULT_TEMPLATES: &str = include_str!("../../data/templates.toml");

#[derive(Debug, thiserror::Error)]
pub enum TemplateError {
    #[error("template parse error: {0}")]
    Parse(String),
    #[error("template {0:?} has no text in the default locale")]
    MissingDefault(String),
    #[error("io error reading {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// Message templates resolved by id and locale.
#[derive(Debug, Clone, PartialEq, Eq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TemplateSet {
    pub default_locale: String,
    templates: BTreeMap<String, BTreeMap<String, String>>,
}

impl TemplateSet {
    pub fn parse(text: &str) -> Result<Self, TemplateError> {
        let set: Self = toml::from_str(text).map_err(|e| TemplateError::Parse(e.to_string()))?;
        for (id, locales) in &set.templates {
            if !locales.contains_key(&set.default_locale) {
                return Err(TemplateError::MissingDefault(id.clone()));
            }
        }
        Ok(set)
    }

    pub fn load_file(path: impl AsRef<Path>) -> Result<Self, TemplateError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| TemplateError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::parse(&text)
    }

    pub fn default_templates() -> Self {
        Self::parse(DEFAULT_TEMPLATES).expect("embedded templates parse")
    }

    pub fn contains(&self, id: &str) -> bool {
        self.templates.contains_key(id)
    }

    /// Text for `id` in `locale`, falling back to the default locale.
    pub fn resolve(&self, id: &str, locale: Option<&str>) -> Option<&str> {
        let locales = self.templates.get(id)?;
        locale
            .and_then(|l| locales.get(l))
            .or_else(|| locales.get(&self.default_locale))
            .map(String::as_str)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn resolves_with_locale_fallback() {
        let t = TemplateSet::parse(
            "default_locale = \"en\"\n[templates.x]\nen = \"hello\"\nko = \"annyeong\"\n",
        )
        .unwrap();
        assert_eq!(t.resolve("x", Some("ko")), Some("annyeong"));
        assert_eq!(t.resolve("x", Some("fr")), Some("hello"));
        assert_eq!(t.resolve("x", None), Some("hello"));
        assert_eq!(t.resolve("y", None), None);
    }

    #[test]
    fn default_locale_is_required() {
        let err = TemplateSet::parse("default_locale = \"en\"\n[templates.x]\nko = \"a\"\n");
        assert!(matches!(err, Err(TemplateError::MissingDefault(_))));
    }
}
