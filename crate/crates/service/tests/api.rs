use std::sync::Arc;
use std::time::Duration;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use serde_json::{json, Value};
use tower::ServiceExt;

use needgraph::pipeline::artifacts::{PrevalenceArtifact, TopicsArtifact, PREVALENCE, TOPICS};
use needgraph::pipeline::demo::write_demo;
use needgraph::pipeline::{load_artifact, Pipeline, PipelineConfig};
use needgraph_service::{router, AppState};

struct Fixture {
    _dir: tempfile::TempDir,
    app: Router,
    state: Arc<AppState>,
}

fn demo_pipeline(dir: &std::path::Path) -> Pipeline {
    let cfg = PipelineConfig::load(write_demo(dir).unwrap()).unwrap().without_llm();
    Pipeline::new(cfg)
}

async fn fixture() -> Fixture {
    let dir = tempfile::tempdir().unwrap();
    let p = demo_pipeline(dir.path());
    p.run_all().unwrap();
    let state = AppState::start(p).unwrap();
    Fixture {
        _dir: dir,
        app: router(Arc::clone(&state)),
        state,
    }
}

async fn call(app: &Router, method: &str, uri: &str, body: Option<Value>) -> (StatusCode, Value) {
    let req = Request::builder()
        .method(method)
        .uri(uri)
        .header("content-type", "application/json")
        .header("origin", "http://localhost:5173")
        .body(body.map_or_else(Body::empty, |b| Body::from(b.to_string())))
        .unwrap();
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = axum::body::to_bytes(resp.into_body(), usize::MAX).await.unwrap();
    let v = if bytes.is_empty() { Value::Null } else { serde_json::from_slice(&bytes).unwrap() };
    (status, v)
}

async fn get(app: &Router, uri: &str) -> Value {
    let (status, v) = call(app, "GET", uri, None).await;
    assert_eq!(status, StatusCode::OK, "{uri}: {v}");
    v
}

async fn wait_for_run(app: &Router, revision: u64) -> Value {
    for _ in 0..600 {
        let s = get(app, "/api/runs/status").await;
        if s["state"] == "failed" {
            panic!("re-extraction failed: {s}");
        }
        if s["state"] == "succeeded" && s["revision"].as_u64() >= Some(revision) && s["pending"] == false {
            return s;
        }
        tokio::time::sleep(Duration::from_millis(50)).await;
    }
    panic!("re-extraction did not finish");
}

#[tokio::test(flavor = "multi_thread")]
async fn read_endpoints_match_artifacts() {
    let f = fixture().await;
    let dir = f.state.pipeline.output_dir().to_path_buf();

    let h = get(&f.app, "/api/health").await;
    assert_eq!(h["status"], "ok");
    assert_eq!(h["as_of"], "24m");

    let topics = get(&f.app, "/api/topics").await;
    let stored: TopicsArtifact = load_artifact(&dir, TOPICS).unwrap();
    assert_eq!(topics["num_topics"], stored.num_topics);
    let list = topics["topics"].as_array().unwrap();
    assert_eq!(list.len(), stored.num_topics);
    for (t, s) in list.iter().zip(&stored.topics) {
        assert_eq!(t["top_terms"].as_array().unwrap().len(), 10);
        assert_eq!(t["top_terms"], serde_json::to_value(&s.top_terms).unwrap());
    }
    let docs = get(&f.app, "/api/topics/0/docs").await;
    assert_eq!(docs["documents"].as_array().unwrap().len(), 5);
    let (status, err) = call(&f.app, "GET", "/api/topics/99", None).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    assert_eq!(err["code"], "not_found");
    assert!(err["message"].is_string());

    let prev = get(&f.app, "/api/analytics/prevalence?wave=all").await;
    let stored: PrevalenceArtifact = load_artifact(&dir, PREVALENCE).unwrap();
    assert_eq!(prev["waves"], serde_json::to_value(&stored.by_wave).unwrap());
    for (_, vector) in prev["waves"].as_object().unwrap() {
        let sum: f64 = vector.as_object().unwrap().values().map(|v| v.as_f64().unwrap()).sum();
        assert!((sum - 1.0).abs() < 1e-9);
    }
    let one = get(&f.app, "/api/analytics/prevalence?wave=6m").await;
    assert_eq!(one["waves"].as_object().unwrap().len(), 1);

    let strata = get(&f.app, "/api/analytics/strata?dim=gender").await;
    assert_eq!(strata["strata"].as_array().unwrap().len(), 4);
    let (status, _) = call(&f.app, "GET", "/api/analytics/strata?dim=income", None).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    let (status, _) = call(&f.app, "GET", "/api/analytics/strata", None).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);

    let s = get(&f.app, "/api/analytics/sentiment").await;
    assert_eq!(s["trajectory"].as_array().unwrap().len(), 4);

    let r = get(&f.app, "/api/report").await;
    assert!(r["markdown"].as_str().unwrap().starts_with("```json"));
    get(&f.app, "/api/dashboard").await;

    let g = get(&f.app, "/api/graph/snapshot?wave=t0").await;
    assert_eq!(g["as_of"], "T0");
    let full = get(&f.app, "/api/graph/snapshot").await;
    assert!(full["nodes"].as_array().unwrap().len() > g["nodes"].as_array().unwrap().len());
    let (status, _) = call(&f.app, "GET", "/api/graph/snapshot?wave=5m", None).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    let node = get(&f.app, "/api/graph/node/cat:need").await;
    assert_eq!(node["node"]["layer"], "category");
    assert!(!node["incoming"].as_array().unwrap().is_empty());
    let (status, _) = call(&f.app, "GET", "/api/graph/node/need:nothing", None).await;
    assert_eq!(status, StatusCode::NOT_FOUND);

    let tags = get(&f.app, "/api/tags?wave=3m").await;
    assert_eq!(tags["wave"], "3m");
    let (status, _) = call(&f.app, "GET", "/api/nothing", None).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
}

#[tokio::test(flavor = "multi_thread")]
async fn cors_headers_present() {
    let f = fixture().await;
    let req = Request::builder()
        .method("OPTIONS")
        .uri("/api/topics")
        .header("origin", "http://localhost:5173")
        .header("access-control-request-method", "POST")
        .body(Body::empty())
        .unwrap();
    let resp = f.app.clone().oneshot(req).await.unwrap();
    assert!(resp.headers().contains_key("access-control-allow-origin"));
}

#[tokio::test(flavor = "multi_thread")]
async fn label_round_trip_and_reextraction() {
    let f = fixture().await;
    let (status, v) = call(
        &f.app,
        "POST",
        "/api/topics/3/label",
        Some(json!({"need_label": "Sleep Support", "keywords": ["awake", "sleep"]})),
    )
    .await;
    assert_eq!(status, StatusCode::ACCEPTED, "{v}");
    assert_eq!(v["owner"], "sleep support");
    let revision = v["revision"].as_u64().unwrap();

    // Read-your-writes before re-extraction completes.
    let lex = get(&f.app, "/api/lexicon").await;
    assert_eq!(lex["entries"]["sleep support"]["topic_ids"], json!([3]));
    let t = get(&f.app, "/api/topics/3").await;
    assert_eq!(t["owner"], "sleep support");

    wait_for_run(&f.app, revision).await;
    let lex = get(&f.app, "/api/lexicon").await;
    assert_eq!(lex["entries"]["sleep support"]["topic_ids"], json!([3]));
    let tags = get(&f.app, "/api/tags").await;
    let tagged = tags["waves"]
        .as_array()
        .unwrap()
        .iter()
        .flat_map(|w| w["tags"].as_array().unwrap().clone())
        .any(|t| t["need"] == "sleep support");
    assert!(tagged, "no document tagged with the new need");
    let dash = get(&f.app, "/api/dashboard").await;
    assert!(dash["prevalence"]
        .as_array()
        .unwrap()
        .iter()
        .any(|p| p["need"] == "sleep support"));
    let g = get(&f.app, "/api/graph/node/need:sleep-support").await;
    assert_eq!(g["node"]["label"], "sleep support");

    let audit = std::fs::read_to_string(f.state.pipeline.output_dir().join("audit.jsonl")).unwrap();
    assert_eq!(audit.lines().count(), 1);
}

#[tokio::test(flavor = "multi_thread")]
async fn stale_revision_conflicts() {
    let f = fixture().await;
    let base = get(&f.app, "/api/lexicon").await["revision"].as_u64().unwrap();
    let first = json!({"need_label": "a need", "revision": base});
    let (status, _) = call(&f.app, "POST", "/api/topics/0/label", Some(first)).await;
    assert_eq!(status, StatusCode::ACCEPTED);
    let second = json!({"need_label": "another need", "revision": base});
    let (status, v) = call(&f.app, "POST", "/api/topics/0/label", Some(second)).await;
    assert_eq!(status, StatusCode::CONFLICT);
    assert_eq!(v["code"], "conflict");
    assert_eq!(v["current"]["owner"], "a need");
    assert_eq!(v["current"]["revision"], base + 1);

    let (status, v) = call(&f.app, "POST", "/api/topics/0/label", Some(json!({"need_label": "  "}))).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(v["code"], "invalid_label");
    let (status, _) = call(&f.app, "POST", "/api/topics/42/label", Some(json!({"need_label": "x"}))).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
}

#[tokio::test(flavor = "multi_thread")]
async fn lexicon_entry_edit_and_manual_run() {
    let f = fixture().await;
    let (status, v) = call(
        &f.app,
        "POST",
        "/api/lexicon",
        Some(json!({"label": "Housing Support", "keywords": ["rent", "housing"], "moa_concept": "moa:environmental-resources"})),
    )
    .await;
    assert_eq!(status, StatusCode::ACCEPTED, "{v}");
    let revision = v["revision"].as_u64().unwrap();
    wait_for_run(&f.app, revision).await;
    let lex = get(&f.app, "/api/lexicon").await;
    assert_eq!(lex["entries"]["housing support"]["keywords"], json!(["housing", "rent"]));

    let (status, v) = call(&f.app, "POST", "/api/runs/extract", None).await;
    assert_eq!(status, StatusCode::ACCEPTED);
    assert!(["queued", "running", "succeeded"].contains(&v["state"].as_str().unwrap()));
    let s = wait_for_run(&f.app, revision).await;
    assert!(s["job"].as_u64().unwrap() >= 2);
}

#[tokio::test(flavor = "multi_thread")]
async fn serve_requires_extraction() {
    let dir = tempfile::tempdir().unwrap();
    let p = demo_pipeline(dir.path());
    p.ingest().unwrap();
    p.train().unwrap();
    let err = AppState::start(p).err().expect("extraction missing");
    assert!(err.to_string().starts_with("needs extraction artifacts missing"), "{err}");
}
