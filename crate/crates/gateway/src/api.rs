use std::collections::BTreeMap;
use std::sync::{Arc, MutexGuard};
use std::time::Instant;

use axum::extract::rejection::{JsonRejection, QueryRejection};
use axum::extract::{Path, Query, State};
use axum::http::header::CONTENT_TYPE;
use axum::http::{HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use tacos_core::classifier::ClassifyError;
use tacos_core::dataset::{
    AnnotationError, AnnotationStore, ItemFilter, LabeledQuery, Provenance, ReviewRequest,
};
use tacos_core::eval::{list_bundles, open_bundle_file, BundleSummary};
use tacos_core::routing::{route, RoutingDecision};
use tacos_core::taxonomy::{Localized, ToolRequirement, ToolSet};

use crate::{AppState, ANNOTATOR_HEADER, MEDIA_TYPE};

/// Label reported when classification did not produce one.
const UNCLASSIFIED: &str = "unclassified";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub code: String,
    pub message: String,
}

#[derive(Debug)]
pub struct ApiError {
    pub status: StatusCode,
    pub body: ErrorBody,
    /// Current state of the item for conflict responses.
    pub item: Option<Box<LabeledQuery>>,
}

impl ApiError {
    fn new(status: StatusCode, code: &str, message: impl Into<String>) -> Self {
        Self {
            status,
            body: ErrorBody {
                code: code.into(),
                message: message.into(),
            },
            item: None,
        }
    }

    fn not_found(message: impl Into<String>) -> Self {
        Self::new(StatusCode::NOT_FOUND, "not_found", message)
    }

    fn bad_request(message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, "invalid_request", message)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        #[derive(Serialize)]
        struct Body {
            error: ErrorBody,
            #[serde(skip_serializing_if = "Option::is_none")]
            item: Option<Box<LabeledQuery>>,
        }
        reply(
            self.status,
            &Body {
                error: self.body,
                item: self.item,
            },
        )
    }
}

impl From<JsonRejection> for ApiError {
    fn from(e: JsonRejection) -> Self {
        Self::bad_request(e.body_text())
    }
}

impl From<QueryRejection> for ApiError {
    fn from(e: QueryRejection) -> Self {
        Self::bad_request(e.body_text())
    }
}

fn reply<T: Serialize>(status: StatusCode, body: &T) -> Response {
    let bytes = serde_json::to_vec(body).expect("response serializes");
    (status, [(CONTENT_TYPE, MEDIA_TYPE)], bytes).into_response()
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/v1/classify-route", post(classify_route))
        .route("/v1/taxonomy", get(taxonomy))
        .route("/v1/audit/counters", get(audit_counters))
        .route("/v1/annotation/items", get(list_items).post(add_items))
        .route("/v1/annotation/items/{id}", get(get_item))
        .route("/v1/annotation/items/{id}/action", post(review_item))
        .route("/v1/annotation/progress", get(progress))
        .route("/v1/reports", get(reports))
        .route("/v1/reports/{bundle}", get(report_manifest))
        .route("/v1/reports/{bundle}/{*file}", get(report_file))
        .with_state(state)
}

// classify-route

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassifyRouteRequest {
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub locale: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatencyBreakdown {
    pub classify_ms: f64,
    pub route_ms: f64,
}

/// The raw query is never echoed back.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifyRouteResponse {
    pub request_id: String,
    /// `None` when classification failed.
    pub label_id: Option<String>,
    pub decision: RoutingDecision,
    /// Resolved message template text.
    pub message: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scores: Option<Vec<f64>>,
    pub latency: LatencyBreakdown,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<ErrorBody>,
}

fn classify_failure(e: &ClassifyError) -> (StatusCode, &'static str) {
    match e {
        ClassifyError::Timeout(_) => (StatusCode::GATEWAY_TIMEOUT, "backend_timeout"),
        e if e.is_unavailable() => (StatusCode::SERVICE_UNAVAILABLE, "backend_unavailable"),
        _ => (StatusCode::BAD_GATEWAY, "backend_error"),
    }
}

async fn classify_route(
    State(state): State<Arc<AppState>>,
    body: Result<Json<ClassifyRouteRequest>, JsonRejection>,
) -> Result<Response, ApiError> {
    let Json(req) = body?;
    if req.text.trim().is_empty() {
        return Err(ApiError::bad_request("text is empty"));
    }
    let request_id = uuid::Uuid::new_v4().to_string();
    let snap = state.snapshot();

    let started = Instant::now();
    let backend = snap.backend.clone();
    let text = req.text.clone();
    let call = tokio::task::spawn_blocking(move || backend.classify(&text));
    let outcome = tokio::time::timeout(state.timeout, call).await;
    let classify_ms = started.elapsed().as_secs_f64() * 1e3;

    let prediction = match outcome {
        Err(_) => Err((
            StatusCode::GATEWAY_TIMEOUT,
            "backend_timeout",
            format!("no answer within {:?}", state.timeout),
        )),
        Ok(Err(join)) => Err((StatusCode::BAD_GATEWAY, "backend_error", format!("backend task failed: {join}"))),
        Ok(Ok(Err(e))) => {
            let (status, code) = classify_failure(&e);
            Err((status, code, e.to_string()))
        }
        Ok(Ok(Ok(p))) => match p.validate(&snap.taxonomy, snap.backend.score_kind()) {
            Ok(()) => Ok(p),
            Err(e) => Err((StatusCode::BAD_GATEWAY, "backend_error", e.to_string())),
        },
    };

    let route_start = Instant::now();
    let (status, label_id, decision, scores, mut error) = match prediction {
        Ok(p) => {
            let decision = route(&snap.taxonomy, &snap.policy, &p.label_id);
            let (status, error) = match &decision.fail_closed {
                Some(reason) => (
                    StatusCode::INTERNAL_SERVER_ERROR,
                    Some(ErrorBody {
                        code: "routing_error".into(),
                        message: reason.clone(),
                    }),
                ),
                None => (StatusCode::OK, None),
            };
            (status, Some(p.label_id), decision, Some(p.scores), error)
        }
        Err((status, code, message)) => {
            tracing::warn!(request_id, code, message, "classification failed, failing closed");
            let decision = RoutingDecision::fail_closed(UNCLASSIFIED, code);
            (status, None, decision, None, Some(ErrorBody { code: code.into(), message }))
        }
    };
    let mut status = status;
    let mut decision = decision;
    if decision.log_unsafe {
        if let Err(e) = state.audit.record_unsafe(&decision, &req.text) {
            tracing::error!(request_id, error = %e, "audit write failed");
            decision = RoutingDecision::fail_closed(&decision.label_id, "audit write failed");
            status = StatusCode::INTERNAL_SERVER_ERROR;
            error = Some(ErrorBody {
                code: "audit_failure".into(),
                message: e.to_string(),
            });
        }
    }
    let route_ms = route_start.elapsed().as_secs_f64() * 1e3;
    let message = snap
        .templates
        .resolve(&decision.message_template_id, req.locale.as_deref())
        .map(String::from);
    let response = ClassifyRouteResponse {
        request_id,
        label_id,
        decision,
        message,
        scores: scores.filter(|_| state.expose_scores),
        latency: LatencyBreakdown { classify_ms, route_ms },
        error,
    };
    Ok(reply(status, &response))
}

// taxonomy

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaxonomyLeaf {
    pub index: usize,
    pub id: String,
    pub display_name: String,
    /// Branch names from the root, e.g. `["safe", "non_clinical", "information_seeking"]`.
    pub path: Vec<String>,
    #[serde(rename = "unsafe")]
    pub is_unsafe: bool,
    /// `None` outside information seeking.
    pub tools: Option<Vec<ToolRequirement>>,
    pub description: Localized<String>,
    pub examples: Localized<Vec<String>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaxonomyView {
    pub version: String,
    pub default_locale: String,
    pub source_digest: String,
    pub leaves: Vec<TaxonomyLeaf>,
}

async fn taxonomy(State(state): State<Arc<AppState>>) -> Response {
    let snap = state.snapshot();
    let t = &snap.taxonomy;
    let leaves = t
        .leaves()
        .iter()
        .enumerate()
        .map(|(index, leaf)| TaxonomyLeaf {
            index,
            id: leaf.id.clone(),
            display_name: leaf.display_name.clone(),
            path: leaf.path.segments().into_iter().map(String::from).collect(),
            is_unsafe: leaf.path.is_unsafe(),
            tools: match t.tool_requirements(&leaf.id) {
                Ok(ToolSet::Tools(set)) => Some(set.into_iter().collect()),
                _ => None,
            },
            description: leaf.description.clone(),
            examples: leaf.examples.clone(),
        })
        .collect();
    reply(
        StatusCode::OK,
        &TaxonomyView {
            version: t.version.clone(),
            default_locale: t.default_locale.clone(),
            source_digest: t.source_digest.clone(),
            leaves,
        },
    )
}

async fn audit_counters(State(state): State<Arc<AppState>>) -> Response {
    #[derive(Serialize)]
    struct Body {
        total: u64,
        counters: BTreeMap<String, u64>,
    }
    reply(
        StatusCode::OK,
        &Body {
            total: state.audit.len(),
            counters: state.audit.counters(),
        },
    )
}

// annotation

fn store(state: &AppState) -> Result<MutexGuard<'_, AnnotationStore>, ApiError> {
    let m = state
        .annotations
        .as_ref()
        .ok_or_else(|| ApiError::not_found("annotation API is not configured (no dataset)"))?;
    Ok(m.lock().unwrap_or_else(|p| p.into_inner()))
}

fn annotation_error(e: AnnotationError, store: &AnnotationStore) -> ApiError {
    match e {
        AnnotationError::UnknownItem(id) => ApiError::new(StatusCode::NOT_FOUND, "unknown_item", format!("unknown item {id:?}")),
        AnnotationError::Conflict { ref item_id, .. } => {
            let mut err = ApiError::new(StatusCode::CONFLICT, "conflict", e.to_string());
            err.item = store.get(item_id).cloned().map(Box::new);
            err
        }
        AnnotationError::Invalid(m) => ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "invalid_review", m),
        AnnotationError::Storage(e) => {
            tracing::error!(error = %e, "annotation storage failure");
            ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "storage_failure", e.to_string())
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ItemList {
    /// Matches before paging.
    pub total: usize,
    pub offset: usize,
    pub items: Vec<LabeledQuery>,
}

async fn list_items(
    State(state): State<Arc<AppState>>,
    filter: Result<Query<ItemFilter>, QueryRejection>,
) -> Result<Response, ApiError> {
    let Query(filter) = filter?;
    let store = store(&state)?;
    let total = store
        .list(&ItemFilter {
            offset: 0,
            limit: None,
            ..filter.clone()
        })
        .len();
    let items = store.list(&filter).into_iter().cloned().collect();
    Ok(reply(
        StatusCode::OK,
        &ItemList {
            total,
            offset: filter.offset,
            items,
        },
    ))
}

async fn get_item(State(state): State<Arc<AppState>>, Path(id): Path<String>) -> Result<Response, ApiError> {
    let store = store(&state)?;
    let item = store
        .get(&id)
        .ok_or_else(|| ApiError::new(StatusCode::NOT_FOUND, "unknown_item", format!("unknown item {id:?}")))?;
    Ok(reply(StatusCode::OK, item))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NewItem {
    pub text: String,
    #[serde(default)]
    pub source: Option<String>,
    #[serde(default)]
    pub locale: Option<String>,
    #[serde(default)]
    pub label_id: Option<String>,
    #[serde(default)]
    pub provenance: Option<Provenance>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NewItems {
    pub items: Vec<NewItem>,
}

async fn add_items(
    State(state): State<Arc<AppState>>,
    body: Result<Json<NewItems>, JsonRejection>,
) -> Result<Response, ApiError> {
    #[derive(Serialize)]
    struct Body {
        added: Vec<String>,
        duplicates: usize,
    }
    let Json(req) = body?;
    let n = req.items.len();
    let mut items = Vec::with_capacity(n);
    for it in req.items {
        let provenance = it.provenance.unwrap_or(if it.label_id.is_some() {
            Provenance::LlmLabeled
        } else {
            Provenance::Collected
        });
        if provenance == Provenance::HumanReviewed {
            return Err(ApiError::bad_request("items enter as collected, llm_labeled or synthetic"));
        }
        let mut q = LabeledQuery::new(&it.text, it.source.as_deref().unwrap_or("api"), provenance);
        q.label_id = it.label_id;
        q.locale = it.locale;
        items.push(q);
    }
    let mut store = store(&state)?;
    let added = store.add(items).map_err(|e| annotation_error(e, &store))?;
    let duplicates = n - added.len();
    Ok(reply(StatusCode::OK, &Body { added, duplicates }))
}

async fn review_item(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
    headers: HeaderMap,
    body: Result<Json<ReviewRequest>, JsonRejection>,
) -> Result<Response, ApiError> {
    let annotator = headers
        .get(ANNOTATOR_HEADER)
        .and_then(|v| v.to_str().ok())
        .map(str::trim)
        .filter(|v| !v.is_empty())
        .ok_or_else(|| ApiError::new(StatusCode::BAD_REQUEST, "missing_annotator", "X-Annotator-Id header is required"))?
        .to_string();
    let Json(req) = body?;
    let mut store = store(&state)?;
    let item = store.apply(&id, &annotator, req).map_err(|e| annotation_error(e, &store))?;
    Ok(reply(StatusCode::OK, &item))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Progress {
    pub total: usize,
    /// Not removed and not yet human-reviewed.
    pub pending: usize,
    pub reviewed: usize,
    pub removed: usize,
    /// Review actions per annotator.
    pub by_annotator: BTreeMap<String, usize>,
    pub revisions: u64,
}

async fn progress(State(state): State<Arc<AppState>>) -> Result<Response, ApiError> {
    let store = store(&state)?;
    let mut p = Progress {
        total: store.pool().len(),
        pending: 0,
        reviewed: 0,
        removed: 0,
        by_annotator: BTreeMap::new(),
        revisions: store.revisions(),
    };
    for item in store.pool().iter() {
        if item.is_removed() {
            p.removed += 1;
        } else if item.provenance == Provenance::HumanReviewed {
            p.reviewed += 1;
        } else {
            p.pending += 1;
        }
        for r in &item.reviews {
            *p.by_annotator.entry(r.annotator_id.clone()).or_insert(0) += 1;
        }
    }
    Ok(reply(StatusCode::OK, &p))
}

// reports

fn reports_root(state: &AppState) -> Result<&std::path::Path, ApiError> {
    state
        .reports
        .as_deref()
        .ok_or_else(|| ApiError::not_found("reports API is not configured"))
}

/// A bundle is addressed by directory name or by config digest (at least
/// 12 hex characters).
fn resolve_bundle(root: &std::path::Path, key: &str) -> Result<String, ApiError> {
    if open_bundle_file(root, key, "bundle.json").is_some() {
        return Ok(key.to_string());
    }
    let unknown = || ApiError::not_found(format!("unknown bundle {key:?}"));
    if key.len() < 12 || !key.bytes().all(|b| b.is_ascii_hexdigit()) {
        return Err(unknown());
    }
    let bundles = list_bundles(root).map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "storage_failure", e.to_string()))?;
    let mut hits = bundles.into_iter().filter(|b| b.config_digest.starts_with(key));
    match (hits.next(), hits.next()) {
        (Some(b), None) => Ok(b.id),
        (Some(_), Some(_)) => Err(ApiError::new(StatusCode::CONFLICT, "ambiguous_digest", format!("{key:?} matches several bundles"))),
        _ => Err(unknown()),
    }
}

fn file_response(root: &std::path::Path, bundle: &str, file: &str) -> Result<Response, ApiError> {
    let path = open_bundle_file(root, bundle, file).ok_or_else(|| ApiError::not_found(format!("no file {file:?} in bundle {bundle:?}")))?;
    let bytes = std::fs::read(&path).map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "storage_failure", e.to_string()))?;
    let mime = match path.extension().and_then(|e| e.to_str()) {
        Some("json") => "application/json",
        Some("jsonl") => "application/x-ndjson",
        Some("csv") => "text/csv; charset=utf-8",
        _ => "application/octet-stream",
    };
    Ok((StatusCode::OK, [(CONTENT_TYPE, mime)], bytes).into_response())
}

async fn reports(State(state): State<Arc<AppState>>) -> Result<Response, ApiError> {
    #[derive(Serialize)]
    struct Body {
        bundles: Vec<BundleSummary>,
    }
    let root = reports_root(&state)?;
    let bundles = list_bundles(root).map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "storage_failure", e.to_string()))?;
    Ok(reply(StatusCode::OK, &Body { bundles }))
}

async fn report_manifest(State(state): State<Arc<AppState>>, Path(bundle): Path<String>) -> Result<Response, ApiError> {
    let root = reports_root(&state)?;
    let id = resolve_bundle(root, &bundle)?;
    file_response(root, &id, "bundle.json")
}

async fn report_file(
    State(state): State<Arc<AppState>>,
    Path((bundle, file)): Path<(String, String)>,
) -> Result<Response, ApiError> {
    let root = reports_root(&state)?;
    let id = resolve_bundle(root, &bundle)?;
    file_response(root, &id, &file)
}
