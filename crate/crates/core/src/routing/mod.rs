//! Turns a classified label into a service action.
//!
//! Routing is a pure lookup against a [`RoutingPolicy`] plus tool-set
//! derivation from the taxonomy. Anything that does not line up (unknown
//! label, label missing from the policy, a policy that would answer an unsafe
//! label) resolves to [`RoutingAction::BlockWithWarning`].

mod audit;
mod templates;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::taxonomy::{Taxonomy, ToolRequirement, ToolSet};

pub use audit::{read_records, AuditError, AuditStore, UnsafeAuditRecord, AUDIT_SCHEMA};
pub use templates::{TemplateError, TemplateSet, DEFAULT_TEMPLATES};

pub const DEFAULT_POLICY: &str = include_str!("../../data/policy.default.toml");

/// Template used whenever routing fails closed.
pub const FAIL_CLOSED_TEMPLATE: &str = "block.generic";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RoutingAction {
    BlockWithWarning,
    SafeRefusalWithDisclaimer,
    EmpathyResponse,
    FollowUpElicitation,
    ReformulationRedirect,
    AnswerDirect,
    AnswerWithTools,
}

impl RoutingAction {
    pub fn is_answer(self) -> bool {
        matches!(self, RoutingAction::AnswerDirect | RoutingAction::AnswerWithTools)
    }
}

impl fmt::Display for RoutingAction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = serde_json::to_value(self).expect("enum serializes");
        f.write_str(s.as_str().unwrap_or_default())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RoutingRule {
    pub action: RoutingAction,
    pub template: String,
    pub log_unsafe: bool,
}

#[derive(Debug, thiserror::Error)]
pub enum PolicyError {
    #[error("policy parse error: {0}")]
    Parse(String),
    #[error("io error reading {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid policy: {}", .0.join("; "))]
    Invalid(Vec<String>),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RoutingPolicy {
    pub version: String,
    pub rules: BTreeMap<String, RoutingRule>,
}

impl RoutingPolicy {
    pub fn parse(text: &str) -> Result<Self, PolicyError> {
        toml::from_str(text).map_err(|e| PolicyError::Parse(e.to_string()))
    }

    pub fn load_file(path: impl AsRef<Path>) -> Result<Self, PolicyError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| PolicyError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::parse(&text)
    }

    /// The shipped default policy for the canonical taxonomy.
    pub fn default_policy() -> Self {
        Self::parse(DEFAULT_POLICY).expect("embedded default policy parses")
    }

    /// Checks totality and safety constraints against a taxonomy, and
    /// optionally that every template id resolves.
    pub fn validate(
        &self,
        taxonomy: &Taxonomy,
        templates: Option<&TemplateSet>,
    ) -> Result<(), PolicyError> {
        let mut problems = Vec::new();
        for leaf in taxonomy.leaves() {
            let Some(rule) = self.rules.get(&leaf.id) else {
                problems.push(format!("no rule for leaf {:?}", leaf.id));
                continue;
            };
            if leaf.path.is_unsafe() {
                if rule.action != RoutingAction::BlockWithWarning {
                    problems.push(format!("unsafe leaf {:?} must block_with_warning", leaf.id));
                }
                if !rule.log_unsafe {
                    problems.push(format!("unsafe leaf {:?} must set log_unsafe", leaf.id));
                }
            }
            if rule.action == RoutingAction::AnswerWithTools {
                let has_tools = matches!(
                    taxonomy.tool_requirements(&leaf.id),
                    Ok(ToolSet::Tools(ref t)) if !t.is_empty()
                );
                if !has_tools {
                    problems.push(format!(
                        "leaf {:?} has no tool requirements and cannot answer_with_tools",
                        leaf.id
                    ));
                }
            }
            if let Some(t) = templates {
                if !t.contains(&rule.template) {
                    problems.push(format!("unknown template {:?} for leaf {:?}", rule.template, leaf.id));
                }
            }
        }
        if let Some(t) = templates {
            if !t.contains(FAIL_CLOSED_TEMPLATE) {
                problems.push(format!("missing fail-closed template {FAIL_CLOSED_TEMPLATE:?}"));
            }
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(PolicyError::Invalid(problems))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoutingDecision {
    pub label_id: String,
    pub action: RoutingAction,
    pub tools: BTreeSet<ToolRequirement>,
    pub message_template_id: String,
    pub log_unsafe: bool,
    /// Set when the decision is a fail-closed fallback.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fail_closed: Option<String>,
}

impl RoutingDecision {
    /// Blocking decision used when routing or classification cannot proceed.
    pub fn fail_closed(label_id: &str, reason: impl Into<String>) -> Self {
        Self {
            label_id: label_id.to_string(),
            action: RoutingAction::BlockWithWarning,
            tools: BTreeSet::new(),
            message_template_id: FAIL_CLOSED_TEMPLATE.to_string(),
            log_unsafe: false,
            fail_closed: Some(reason.into()),
        }
    }
}

/// Routes a label under a policy. Never answers on a mismatch.
pub fn route(taxonomy: &Taxonomy, policy: &RoutingPolicy, label_id: &str) -> RoutingDecision {
    let Some(leaf) = taxonomy.get(label_id) else {
        tracing::error!(label_id, "routing: label not in taxonomy, failing closed");
        return RoutingDecision::fail_closed(label_id, "label not in taxonomy");
    };
    let Some(rule) = policy.rules.get(label_id) else {
        tracing::error!(label_id, policy = %policy.version, "routing: label missing from policy, failing closed");
        return RoutingDecision::fail_closed(label_id, "label missing from policy");
    };
    let unsafe_label = leaf.path.is_unsafe();
    if unsafe_label && rule.action != RoutingAction::BlockWithWarning {
        tracing::error!(label_id, "routing: policy does not block an unsafe label, failing closed");
        let mut d = RoutingDecision::fail_closed(label_id, "policy does not block unsafe label");
        d.log_unsafe = true;
        return d;
    }
    let tools = match (rule.action, taxonomy.tool_requirements(label_id)) {
        (RoutingAction::AnswerWithTools, Ok(ToolSet::Tools(t))) if !t.is_empty() => t,
        (RoutingAction::AnswerWithTools, _) => {
            tracing::error!(label_id, "routing: answer_with_tools on a leaf without tools, failing closed");
            return RoutingDecision::fail_closed(label_id, "answer_with_tools without tool requirements");
        }
        _ => BTreeSet::new(),
    };
    RoutingDecision {
        label_id: label_id.to_string(),
        action: rule.action,
        tools,
        message_template_id: rule.template.clone(),
        log_unsafe: rule.log_unsafe || unsafe_label,
        fail_closed: None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ToolRequirement::*;

    fn setup() -> (Taxonomy, RoutingPolicy) {
        (Taxonomy::canonical(), RoutingPolicy::default_policy())
    }

    #[test]
    fn default_policy_is_valid_for_canonical_taxonomy() {
        let (t, p) = setup();
        p.validate(&t, Some(&TemplateSet::default_templates())).unwrap();
    }

    #[test]
    fn self_harm_blocks_and_logs() {
        let (t, p) = setup();
        let d = route(&t, &p, "self_harm");
        assert_eq!(d.action, RoutingAction::BlockWithWarning);
        assert!(d.log_unsafe);
        assert!(d.tools.is_empty());
        assert_eq!(d.message_template_id, "block.self_harm");
    }

    #[test]
    fn general_inquiry_answers_directly() {
        let (t, p) = setup();
        let d = route(&t, &p, "general_inquiry");
        assert_eq!(d.action, RoutingAction::AnswerDirect);
        assert!(d.tools.is_empty());
        assert!(!d.log_unsafe);
    }

    #[test]
    fn patient_app_inquiry_gets_patient_and_app_tools() {
        let (t, p) = setup();
        let d = route(&t, &p, "patient_app_inquiry");
        assert_eq!(d.action, RoutingAction::AnswerWithTools);
        assert_eq!(d.tools, [PatientRecord, AppApi].into_iter().collect());
    }

    #[test]
    fn non_seeking_safe_leaves() {
        let (t, p) = setup();
        assert_eq!(route(&t, &p, "gibberish").action, RoutingAction::FollowUpElicitation);
        assert_eq!(
            route(&t, &p, "irrelevant_request").action,
            RoutingAction::ReformulationRedirect
        );
        assert_eq!(route(&t, &p, "empathy").action, RoutingAction::EmpathyResponse);
        assert_eq!(
            route(&t, &p, "redirective_or_symptomatic").action,
            RoutingAction::FollowUpElicitation
        );
    }

    #[test]
    fn missing_rule_fails_closed() {
        let (t, mut p) = setup();
        p.rules.remove("medical_inquiry");
        let d = route(&t, &p, "medical_inquiry");
        assert_eq!(d.action, RoutingAction::BlockWithWarning);
        assert_eq!(d.message_template_id, FAIL_CLOSED_TEMPLATE);
        assert!(d.fail_closed.is_some());
        assert!(matches!(p.validate(&t, None), Err(PolicyError::Invalid(_))));
    }

    #[test]
    fn unknown_label_fails_closed() {
        let (t, p) = setup();
        let d = route(&t, &p, "toxic_male");
        assert_eq!(d.action, RoutingAction::BlockWithWarning);
    }

    #[test]
    fn policy_that_answers_unsafe_is_rejected_and_still_blocks() {
        let (t, mut p) = setup();
        p.rules.get_mut("adversary").unwrap().action = RoutingAction::AnswerDirect;
        assert!(p.validate(&t, None).is_err());
        let d = route(&t, &p, "adversary");
        assert_eq!(d.action, RoutingAction::BlockWithWarning);
        assert!(d.log_unsafe);
    }

    #[test]
    fn tools_action_on_toolless_leaf_is_rejected() {
        let (t, mut p) = setup();
        p.rules.get_mut("general_inquiry").unwrap().action = RoutingAction::AnswerWithTools;
        assert!(p.validate(&t, None).is_err());
        assert_eq!(
            route(&t, &p, "general_inquiry").action,
            RoutingAction::BlockWithWarning
        );
    }

    #[test]
    fn action_display_is_snake_case() {
        assert_eq!(RoutingAction::AnswerWithTools.to_string(), "answer_with_tools");
    }
}
