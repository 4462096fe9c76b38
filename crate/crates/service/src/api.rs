//! JSON HTTP API over the pipeline artifacts.

use std::collections::BTreeMap;
use std::sync::Arc;

use axum::extract::{Path, Query, State};
use axum::http::{HeaderValue, Method, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::Deserialize;
use serde_json::{json, Value};
use tower_http::cors::{AllowOrigin, Any, CorsLayer};

use needgraph::analytics::Dimension;
use needgraph::graph::GraphError;
use needgraph::needs::{apply_entry_edit, apply_expert_label, EntryEdit, LabelEdit, NeedKind, NeedsError, Origin};
use needgraph::pipeline::PipelineError;
use needgraph::wave::{Stamp, Wave};

use crate::state::{AppState, Snapshot};

/// Error body `{code, message}`, plus `current` state on conflicts.
#[derive(Debug)]
pub struct ApiError {
    pub status: StatusCode,
    pub code: &'static str,
    pub message: String,
    pub current: Option<Value>,
}

impl ApiError {
    fn new(status: StatusCode, code: &'static str, message: impl Into<String>) -> Self {
        Self {
            status,
            code,
            message: message.into(),
            current: None,
        }
    }

    fn bad_request(message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, "bad_request", message)
    }

    fn not_found(message: impl Into<String>) -> Self {
        Self::new(StatusCode::NOT_FOUND, "not_found", message)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let mut body = json!({"code": self.code, "message": self.message});
        if let Some(current) = self.current {
            body["current"] = current;
        }
        (self.status, Json(body)).into_response()
    }
}

impl From<NeedsError> for ApiError {
    fn from(e: NeedsError) -> Self {
        let status = match e {
            NeedsError::Audit(_) => StatusCode::INTERNAL_SERVER_ERROR,
            _ => StatusCode::UNPROCESSABLE_ENTITY,
        };
        ApiError::new(status, "invalid_label", e.to_string())
    }
}

impl From<PipelineError> for ApiError {
    fn from(e: PipelineError) -> Self {
        ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, e.code(), e.to_string())
    }
}

type ApiResult = Result<Json<Value>, ApiError>;

fn to_value<T: serde::Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("payload serializes")
}

pub fn router(state: Arc<AppState>) -> Router {
    let origin = match &state.pipeline.config().server.cors_origin {
        Some(o) => match HeaderValue::from_str(o) {
            Ok(v) => AllowOrigin::exact(v),
            Err(_) => AllowOrigin::any(),
        },
        None => AllowOrigin::any(),
    };
    let cors = CorsLayer::new()
        .allow_origin(origin)
        .allow_methods([Method::GET, Method::POST, Method::OPTIONS])
        .allow_headers(Any);

    Router::new()
        .route("/api/health", get(health))
        .route("/api/topics", get(topics))
        .route("/api/topics/{k}", get(topic))
        .route("/api/topics/{k}/docs", get(topic_docs))
        .route("/api/topics/{k}/label", post(label_topic))
        .route("/api/lexicon", get(lexicon).post(edit_lexicon))
        .route("/api/tags", get(tags))
        .route("/api/graph/snapshot", get(graph_snapshot))
        .route("/api/graph/node/{id}", get(graph_node))
        .route("/api/analytics/prevalence", get(prevalence))
        .route("/api/analytics/strata", get(strata))
        .route("/api/analytics/sentiment", get(sentiment))
        .route("/api/report", get(report))
        .route("/api/dashboard", get(dashboard))
        .route("/api/runs/extract", post(run_extract))
        .route("/api/runs/status", get(run_status))
        .fallback(|| async { ApiError::not_found("no such endpoint") })
        .layer(cors)
        .with_state(state)
}

async fn health(State(st): State<Arc<AppState>>) -> ApiResult {
    let snap = st.snapshot();
    Ok(Json(json!({
        "status": "ok",
        "version": env!("CARGO_PKG_VERSION"),
        "run_id": snap.run_id,
        "as_of": snap.graph.as_of(),
        "revision": st.working().revision,
        "analytics": snap.analytics.is_some(),
        "report": snap.reports.is_some(),
    })))
}

fn topic_entry(st: &AppState, snap: &Snapshot, k: usize) -> Result<Value, ApiError> {
    let t = snap
        .topics
        .topics
        .get(k)
        .ok_or_else(|| ApiError::not_found(format!("topic {k} does not exist (K = {})", snap.topics.num_topics)))?;
    let working = st.working();
    let owner = working.lexicon.owner_of(k).map(str::to_string);
    let kind = owner.as_deref().and_then(|o| working.lexicon.get(o)).map(|e| e.kind);
    Ok(json!({
        "topic_id": t.topic_id,
        "top_terms": t.top_terms,
        "representative_docs": t.representative_docs,
        "owner": owner,
        "kind": kind,
        "labeled": owner.is_some(),
    }))
}

async fn topics(State(st): State<Arc<AppState>>) -> ApiResult {
    let snap = st.snapshot();
    let list = (0..snap.topics.topics.len())
        .map(|k| {
            let mut v = topic_entry(&st, &snap, k)?;
            v.as_object_mut().expect("object").remove("representative_docs");
            Ok(v)
        })
        .collect::<Result<Vec<_>, ApiError>>()?;
    Ok(Json(json!({"num_topics": snap.topics.num_topics, "topics": list})))
}

async fn topic(State(st): State<Arc<AppState>>, Path(k): Path<usize>) -> ApiResult {
    Ok(Json(topic_entry(&st, &st.snapshot(), k)?))
}

async fn topic_docs(State(st): State<Arc<AppState>>, Path(k): Path<usize>) -> ApiResult {
    let v = topic_entry(&st, &st.snapshot(), k)?;
    Ok(Json(json!({"topic_id": k, "documents": v["representative_docs"]})))
}

fn check_revision(st: &AppState, expected: Option<u64>, current: impl FnOnce() -> Value) -> Result<(), ApiError> {
    let revision = st.working().revision;
    match expected {
        Some(r) if r != revision => Err(ApiError {
            status: StatusCode::CONFLICT,
            code: "conflict",
            message: format!("lexicon is at revision {revision}, request was based on {r}"),
            current: Some(current()),
        }),
        _ => Ok(()),
    }
}

#[derive(Debug, Deserialize)]
struct LabelRequest {
    need_label: String,
    #[serde(default)]
    kind: Option<NeedKind>,
    #[serde(default)]
    keywords: Vec<String>,
    /// Lexicon revision the client saw; a mismatch is a conflict.
    #[serde(default)]
    revision: Option<u64>,
    #[serde(default)]
    actor: Option<String>,
}

fn new_entry_origin(snap: &Snapshot) -> Origin {
    snap.graph.as_of().wave().map_or(Origin::Seed, Origin::Wave)
}

async fn label_topic(
    State(st): State<Arc<AppState>>,
    Path(k): Path<usize>,
    Json(req): Json<LabelRequest>,
) -> Result<(StatusCode, Json<Value>), ApiError> {
    let snap = st.snapshot();
    let mut audit = st.audit.lock().await;
    let working = st.working();
    check_revision(&st, req.revision, || {
        json!({
            "revision": working.revision,
            "topic_id": k,
            "owner": working.lexicon.owner_of(k),
        })
    })?;
    let edit = LabelEdit {
        topic_id: k,
        need_label: req.need_label,
        kind: req.kind.unwrap_or(NeedKind::Need),
        keywords: req.keywords,
    };
    let mut lexicon = working.lexicon.clone();
    let actor = req.actor.unwrap_or_else(|| "expert".into());
    apply_expert_label(
        &mut lexicon,
        &edit,
        snap.topics.num_topics,
        new_entry_origin(&snap),
        &actor,
        &mut audit,
    )?;
    let owner = lexicon.owner_of(k).map(str::to_string);
    let entry = owner.as_deref().and_then(|o| lexicon.get(o)).cloned();
    let revision = st.commit_lexicon(lexicon)?;
    drop(audit);
    let run = st.enqueue_extraction();
    Ok((
        StatusCode::ACCEPTED,
        Json(json!({"revision": revision, "topic_id": k, "owner": owner, "entry": entry, "run": run})),
    ))
}

async fn lexicon(State(st): State<Arc<AppState>>) -> ApiResult {
    let w = st.working();
    let mut v = to_value(&w.lexicon);
    v["revision"] = json!(w.revision);
    Ok(Json(v))
}

#[derive(Debug, Deserialize)]
struct EntryRequest {
    #[serde(flatten)]
    edit: EntryEdit,
    #[serde(default)]
    revision: Option<u64>,
    #[serde(default)]
    actor: Option<String>,
}

async fn edit_lexicon(
    State(st): State<Arc<AppState>>,
    Json(req): Json<EntryRequest>,
) -> Result<(StatusCode, Json<Value>), ApiError> {
    let snap = st.snapshot();
    let mut audit = st.audit.lock().await;
    let working = st.working();
    check_revision(&st, req.revision, || {
        json!({"revision": working.revision, "lexicon": working.lexicon})
    })?;
    let mut lexicon = working.lexicon.clone();
    let actor = req.actor.unwrap_or_else(|| "expert".into());
    apply_entry_edit(&mut lexicon, &req.edit, &st.ontology, new_entry_origin(&snap), &actor, &mut audit)?;
    let label = needgraph::needs::normalize_label(&req.edit.label);
    let entry = lexicon.get(&label).cloned();
    let revision = st.commit_lexicon(lexicon)?;
    drop(audit);
    let run = st.enqueue_extraction();
    Ok((
        StatusCode::ACCEPTED,
        Json(json!({"revision": revision, "label": label, "entry": entry, "run": run})),
    ))
}

#[derive(Debug, Deserialize)]
struct WaveQuery {
    wave: Option<String>,
}

fn parse_wave(s: &str) -> Result<Wave, ApiError> {
    s.parse().map_err(|e: needgraph::wave::UnknownWave| ApiError::bad_request(e.to_string()))
}

async fn tags(State(st): State<Arc<AppState>>, Query(q): Query<WaveQuery>) -> ApiResult {
    let snap = st.snapshot();
    match q.wave.as_deref().filter(|w| *w != "all") {
        None => Ok(Json(to_value(&snap.tags))),
        Some(w) => {
            let wave = parse_wave(w)?;
            let tags = snap
                .tags
                .waves
                .iter()
                .find(|t| t.wave == wave)
                .ok_or_else(|| ApiError::not_found(format!("no tags for wave {wave}")))?;
            Ok(Json(to_value(tags)))
        }
    }
}

async fn graph_snapshot(State(st): State<Arc<AppState>>, Query(q): Query<WaveQuery>) -> ApiResult {
    let snap = st.snapshot();
    let graph = match q.wave.as_deref() {
        None => snap.graph.clone(),
        Some(w) => {
            let stamp: Stamp = w.parse().map_err(|e: needgraph::wave::UnknownWave| ApiError::bad_request(e.to_string()))?;
            snap.graph.snapshot(stamp).map_err(|e| match e {
                GraphError::SnapshotBeyond { .. } => ApiError::new(StatusCode::NOT_FOUND, "snapshot_beyond", e.to_string()),
                other => ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "graph", other.to_string()),
            })?
        }
    };
    let v: Value = serde_json::from_str(&graph.to_canonical_json()).expect("canonical graph is JSON");
    Ok(Json(v))
}

async fn graph_node(State(st): State<Arc<AppState>>, Path(id): Path<String>) -> ApiResult {
    let snap = st.snapshot();
    let node = snap
        .graph
        .node(&id)
        .ok_or_else(|| ApiError::not_found(format!("node `{id}` does not exist")))?;
    let outgoing: Vec<_> = snap.graph.edges().filter(|e| e.src == id).collect();
    let incoming: Vec<_> = snap.graph.edges().filter(|e| e.dst == id).collect();
    Ok(Json(json!({"node": node, "outgoing": outgoing, "incoming": incoming})))
}

fn analytics_missing() -> ApiError {
    ApiError::new(
        StatusCode::NOT_FOUND,
        "analytics_missing",
        "analytics artifacts missing: run `needgraph analyze` first",
    )
}

async fn prevalence(State(st): State<Arc<AppState>>, Query(q): Query<WaveQuery>) -> ApiResult {
    let snap = st.snapshot();
    let a = snap.analytics.as_ref().ok_or_else(analytics_missing)?;
    let p = &a.prevalence;
    let waves: BTreeMap<Wave, &BTreeMap<String, f64>> = match q.wave.as_deref().filter(|w| *w != "all") {
        None => p.by_wave.iter().map(|(w, v)| (*w, v)).collect(),
        Some(w) => {
            let wave = parse_wave(w)?;
            let v = p
                .by_wave
                .get(&wave)
                .ok_or_else(|| ApiError::not_found(format!("no scored documents in wave {wave}")))?;
            BTreeMap::from([(wave, v)])
        }
    };
    let counts: Vec<_> = p.table.counts.iter().filter(|c| waves.contains_key(&c.wave)).collect();
    let unmapped: BTreeMap<_, _> = p.table.unmapped.iter().filter(|(w, _)| waves.contains_key(w)).collect();
    Ok(Json(json!({
        "needs": p.needs,
        "waves": waves,
        "counts": counts,
        "unmapped": unmapped,
    })))
}

#[derive(Debug, Deserialize)]
struct StrataQuery {
    dim: Option<String>,
    wave: Option<String>,
}

async fn strata(State(st): State<Arc<AppState>>, Query(q): Query<StrataQuery>) -> ApiResult {
    let snap = st.snapshot();
    let a = snap.analytics.as_ref().ok_or_else(analytics_missing)?;
    let dim: Dimension = q
        .dim
        .as_deref()
        .ok_or_else(|| ApiError::bad_request("query parameter `dim` is required"))?
        .parse()
        .map_err(|e: needgraph::analytics::AnalyticsError| ApiError::bad_request(e.to_string()))?;
    let wave = match q.wave.as_deref().filter(|w| *w != "all") {
        Some(w) => Some(parse_wave(w)?),
        None => None,
    };
    let strata: Vec<_> = a
        .strata
        .strata
        .iter()
        .filter(|s| s.dimension == dim && wave.is_none_or(|w| s.wave == w))
        .collect();
    if strata.is_empty() {
        return Err(ApiError::not_found(format!("no strata computed for dimension {dim}")));
    }
    Ok(Json(json!({"dimension": dim, "strata": strata})))
}

#[derive(Debug, Deserialize)]
struct SentimentQuery {
    #[serde(default)]
    points: bool,
}

async fn sentiment(State(st): State<Arc<AppState>>, Query(q): Query<SentimentQuery>) -> ApiResult {
    let snap = st.snapshot();
    let a = snap.analytics.as_ref().ok_or_else(analytics_missing)?;
    let mut v = json!({"trajectory": a.sentiment.trajectory});
    if q.points {
        v["points"] = to_value(&a.sentiment.points);
    }
    Ok(Json(v))
}

fn report_missing() -> ApiError {
    ApiError::new(
        StatusCode::NOT_FOUND,
        "report_missing",
        "report artifacts missing: run `needgraph report` first",
    )
}

async fn report(State(st): State<Arc<AppState>>) -> ApiResult {
    let snap = st.snapshot();
    let r = snap.reports.as_ref().ok_or_else(report_missing)?;
    Ok(Json(json!({"report": r.report, "markdown": r.markdown})))
}

async fn dashboard(State(st): State<Arc<AppState>>) -> ApiResult {
    let snap = st.snapshot();
    let r = snap.reports.as_ref().ok_or_else(report_missing)?;
    Ok(Json(to_value(&r.dashboard)))
}

async fn run_extract(State(st): State<Arc<AppState>>) -> (StatusCode, Json<Value>) {
    let status = st.enqueue_extraction();
    (StatusCode::ACCEPTED, Json(to_value(&status)))
}

async fn run_status(State(st): State<Arc<AppState>>) -> ApiResult {
    Ok(Json(to_value(&st.status())))
}
