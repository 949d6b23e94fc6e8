//! Single-step intent classification and routing for clinical chatbots.
//!
//! Queries are classified into a 21-leaf taxonomy whose leaves encode both
//! the safety decision (block, redirect, answer) and the external tools an
//! answer needs. The crate contains the taxonomy, routing policy and audit
//! log, interchangeable classifier backends, the dataset construction
//! pipeline and the evaluation harness.

pub mod classifier;
pub mod dataset;
pub mod eval;
pub mod routing;
pub mod synthetic;
pub mod taxonomy;
pub mod text;

pub use classifier::{Classifier, ClassifyError, Prediction, ScoreKind};
pub use dataset::{DatasetSplit, LabeledQuery, Pool, Provenance, SamplingPlan};
pub use eval::{evaluate, EvalReport};
pub use routing::{route, RoutingAction, RoutingDecision, RoutingPolicy};
pub use taxonomy::{ClassLabel, LabelMapping, Taxonomy, ToolRequirement, ToolSet};
