mod common;

use std::sync::Arc;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use crag::service::{router, AppState};
use crag::stages;
use crag_core::pipeline::Method;
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;

fn built_state(dir: &std::path::Path) -> Arc<AppState> {
    let cfg = common::load(dir);
    stages::ingest(&cfg).unwrap();
    stages::embed(&cfg, false).unwrap();
    stages::build(&cfg, Method::Crag, false).unwrap();
    stages::build(&cfg, Method::Rag, false).unwrap();
    Arc::new(AppState::from_config(&cfg).unwrap())
}

async fn call(state: &Arc<AppState>, req: Request<Body>) -> (StatusCode, Vec<u8>) {
    let resp = router(state.clone()).oneshot(req).await.unwrap();
    let status = resp.status();
    let body = resp.into_body().collect().await.unwrap().to_bytes().to_vec();
    (status, body)
}

fn ask(body: Value) -> Request<Body> {
    Request::post("/api/ask")
        .header("content-type", "application/json")
        .body(Body::from(body.to_string()))
        .unwrap()
}

#[tokio::test]
async fn health_reports_ok() {
    let dir = tempfile::tempdir().unwrap();
    let state = built_state(dir.path());
    let (status, body) = call(&state, Request::get("/api/health").body(Body::empty()).unwrap()).await;
    assert_eq!(status, StatusCode::OK);
    let v: Value = serde_json::from_slice(&body).unwrap();
    assert_eq!(v["status"], "ok");
}

#[tokio::test]
async fn products_lists_both_fixture_products() {
    let dir = tempfile::tempdir().unwrap();
    let state = built_state(dir.path());
    let (status, body) = call(&state, Request::get("/api/products").body(Body::empty()).unwrap()).await;
    assert_eq!(status, StatusCode::OK);
    let v: Value = serde_json::from_slice(&body).unwrap();
    assert_eq!(
        v,
        json!([
            { "product_id": "Acme Phone X", "review_count": 12, "methods_available": ["crag", "rag"] },
            { "product_id": "Budget Tab 8", "review_count": 6, "methods_available": ["crag", "rag"] }
        ])
    );
}

#[tokio::test]
async fn ask_round_trip_is_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let state = built_state(dir.path());
    let req = json!({ "product_id": "Acme Phone X", "question": "Battery?", "method": "CRAG", "model": "mock-b" });
    let (s1, b1) = call(&state, ask(req.clone())).await;
    let (s2, b2) = call(&state, ask(req)).await;
    assert_eq!(s1, StatusCode::OK);
    assert_eq!(s2, StatusCode::OK);
    assert_eq!(b1, b2);
    let v: Value = serde_json::from_slice(&b1).unwrap();
    assert_eq!(v["method"], "crag");
    assert_eq!(v["model"], "mock-b");
    assert_eq!(v["elapsed_ms"], 0);
    assert!(v["prompt_token_count"].as_u64().unwrap() > 0);
}

#[tokio::test]
async fn ask_defaults_to_first_model() {
    let dir = tempfile::tempdir().unwrap();
    let state = built_state(dir.path());
    let (status, body) = call(&state, ask(json!({ "product_id": "Budget Tab 8", "question": "Good?", "method": "rag" }))).await;
    assert_eq!(status, StatusCode::OK);
    let v: Value = serde_json::from_slice(&body).unwrap();
    assert_eq!(v["model"], "mock-a");
}

#[tokio::test]
async fn ask_errors_map_to_status_codes() {
    let dir = tempfile::tempdir().unwrap();
    let state = built_state(dir.path());
    let cases = [
        (json!({ "product_id": "Acme Phone X", "question": "q", "method": "graph" }), StatusCode::BAD_REQUEST),
        (json!({ "product_id": "Acme Phone X", "question": "q", "method": "crag", "model": "nope" }), StatusCode::BAD_REQUEST),
        (json!({ "product_id": "Acme Phone X", "question": "  ", "method": "crag" }), StatusCode::BAD_REQUEST),
        (json!({ "product_id": "Nothing", "question": "q", "method": "crag" }), StatusCode::NOT_FOUND),
    ];
    for (req, expected) in cases {
        let (status, body) = call(&state, ask(req.clone())).await;
        assert_eq!(status, expected, "{req}");
        let v: Value = serde_json::from_slice(&body).unwrap();
        assert!(v["error"].as_str().is_some_and(|m| !m.is_empty()), "{req}");
    }
}

#[tokio::test]
async fn generation_failure_is_bad_gateway_with_correlation_id() {
    let dir = tempfile::tempdir().unwrap();
    let config_path = common::workspace(dir.path());
    let mut cfg = crag::AppConfig::load(&config_path).unwrap();
    stages::ingest(&cfg).unwrap();
    stages::build(&cfg, Method::Rag, false).unwrap();
    // a remote backend pointing at a closed port fails every attempt
    let down = cfg.backends.get_mut("mock-b").unwrap();
    down.kind = crag_core::llm_gateway::BackendKind::Remote;
    down.endpoint = Some("http://127.0.0.1:9/v1/chat/completions".into());
    down.retry = crag_core::retry::RetryPolicy::immediate(1);
    down.timeout_secs = 2;
    let state = Arc::new(tokio::task::spawn_blocking(move || AppState::from_config(&cfg).unwrap()).await.unwrap());
    let (status, body) = call(
        &state,
        ask(json!({ "product_id": "Acme Phone X", "question": "q", "method": "rag", "model": "mock-b" })),
    )
    .await;
    assert_eq!(status, StatusCode::BAD_GATEWAY);
    let v: Value = serde_json::from_slice(&body).unwrap();
    assert!(v["correlation_id"].as_str().unwrap().starts_with("req-"));
    // the blocking client must not be dropped on a runtime thread
    tokio::task::spawn_blocking(move || drop(state)).await.unwrap();
}
