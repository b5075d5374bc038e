use std::path::Path;
use std::sync::Arc;

use axum::body::{to_bytes, Body};
use axum::http::{Request, StatusCode};
use axum::Router;
use corelink_core::synth::fixtures;
use corelink_core::{compile_lexicon, ClassifyOptions, LexiconConfig, PrecomputedScorer, RemoteScorer};
use corelink_service::{router, AppState, ServiceConfig, Store};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};
use tower::ServiceExt;

fn app_with(dir: &Path, scorer: Arc<dyn corelink_core::SentenceScorer>) -> Router {
    let config = ServiceConfig {
        lexicon: Arc::new(compile_lexicon(&LexiconConfig::demo()).unwrap()),
        scorer,
        options: ClassifyOptions::default(),
        ui_dir: None,
    };
    router(AppState::new(config, Store::open(dir).unwrap()))
}

fn app(dir: &Path) -> Router {
    app_with(dir, Arc::new(PrecomputedScorer))
}

async fn call(app: &Router, method: &str, uri: &str, body: Option<Value>) -> (StatusCode, Vec<u8>, Option<String>) {
    let req = Request::builder()
        .method(method)
        .uri(uri)
        .header("content-type", "application/json");
    let req = req
        .body(body.map_or_else(Body::empty, |b| Body::from(serde_json::to_vec(&b).unwrap())))
        .unwrap();
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let digest = resp
        .headers()
        .get("x-explanation-digest")
        .map(|v| v.to_str().unwrap().to_string());
    (
        status,
        to_bytes(resp.into_body(), usize::MAX).await.unwrap().to_vec(),
        digest,
    )
}

async fn json_call(app: &Router, method: &str, uri: &str, body: Option<Value>) -> (StatusCode, Value) {
    let (s, b, _) = call(app, method, uri, body).await;
    (s, serde_json::from_slice(&b).unwrap_or(Value::Null))
}

fn doc_json(doc: &corelink_core::Document) -> Value {
    doc.to_json_value()
}

async fn upload(app: &Router, doc: &corelink_core::Document) -> StatusCode {
    json_call(app, "POST", "/v1/documents", Some(doc_json(doc))).await.0
}

async fn current_digest(app: &Router, id: &str) -> String {
    call(app, "GET", &format!("/v1/documents/{id}/explanation"), None)
        .await
        .2
        .unwrap()
}

#[tokio::test]
async fn upload_queue_and_duplicates() {
    let dir = tempfile::tempdir().unwrap();
    let app = app(dir.path());
    assert_eq!(json_call(&app, "GET", "/v1/queue", None).await.1, json!([]));
    assert_eq!(upload(&app, &fixtures::two_chain()).await, StatusCode::CREATED);
    assert_eq!(upload(&app, &fixtures::two_chain()).await, StatusCode::CONFLICT);
    let (_, q) = json_call(&app, "GET", "/v1/queue?status=pending", None).await;
    assert_eq!(q.as_array().unwrap().len(), 1);
    assert_eq!(q[0]["predicted_label"], "harmful");
    assert_eq!(q[0]["cluster_count"], 2);
    assert_eq!(
        json_call(&app, "GET", "/v1/queue?status=closed", None).await.0,
        StatusCode::BAD_REQUEST
    );
}

#[tokio::test]
async fn invalid_document_reports_field() {
    let dir = tempfile::tempdir().unwrap();
    let app = app(dir.path());
    let mut body = doc_json(&fixtures::two_chain());
    body["chains"][0]["mentions"][0]["end"] = json!(999);
    let (status, err) = json_call(&app, "POST", "/v1/documents", Some(body)).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert!(err["field"].as_str().unwrap().starts_with("chains[0]"), "{err}");
}

#[tokio::test]
async fn remote_failure_is_bad_gateway_without_queue_entry() {
    let dir = tempfile::tempdir().unwrap();
    let closed = std::net::TcpListener::bind("127.0.0.1:0")
        .unwrap()
        .local_addr()
        .unwrap();
    let scorer = RemoteScorer::new(format!("http://{closed}/"), std::time::Duration::from_secs(2));
    let app = app_with(dir.path(), Arc::new(scorer));
    let (status, err) = json_call(&app, "POST", "/v1/documents", Some(doc_json(&fixtures::two_chain()))).await;
    assert_eq!(status, StatusCode::BAD_GATEWAY);
    assert_eq!(err["error"], "scoring");
    assert_eq!(json_call(&app, "GET", "/v1/queue", None).await.1, json!([]));
}

#[tokio::test]
async fn explanation_formats() {
    let dir = tempfile::tempdir().unwrap();
    let app = app(dir.path());
    upload(&app, &fixtures::two_chain()).await;
    let (s, body, digest) = call(&app, "GET", "/v1/documents/two-chain/explanation?format=json", None).await;
    assert_eq!(s, StatusCode::OK);
    let v: Value = serde_json::from_slice(&body).unwrap();
    assert_eq!(v["explanation_version"], 1);
    assert_eq!(digest.unwrap(), hex::encode(Sha256::digest(&body)));
    let (s, html, _) = call(&app, "GET", "/v1/documents/two-chain/explanation?format=html", None).await;
    assert_eq!(s, StatusCode::OK);
    assert!(String::from_utf8(html).unwrap().contains("class=\"legend\""));
    assert_eq!(
        call(&app, "GET", "/v1/documents/nope/explanation", None).await.0,
        StatusCode::NOT_FOUND
    );
    assert_eq!(
        call(&app, "GET", "/v1/documents/two-chain/explanation?format=pdf", None)
            .await
            .0,
        StatusCode::BAD_REQUEST
    );
}

#[tokio::test]
async fn verdicts_append_and_stale_digest_conflicts() {
    let dir = tempfile::tempdir().unwrap();
    let app = app(dir.path());
    upload(&app, &fixtures::negative_rule()).await;
    let digest = current_digest(&app, "negative-rule").await;
    let verdict = |v: &str, d: &str| json!({"verdict": v, "moderator_id": "m1", "explanation_digest": d});

    let (s, _) = json_call(
        &app,
        "POST",
        "/v1/documents/negative-rule/verdict",
        Some(verdict("confirm-non-harmful", &digest)),
    )
    .await;
    assert_eq!(s, StatusCode::OK);
    let (_, q) = json_call(&app, "GET", "/v1/queue?status=reviewed", None).await;
    assert_eq!(q[0]["latest_verdict"], "confirm-non-harmful");

    let (s, _) = json_call(
        &app,
        "POST",
        "/v1/documents/negative-rule/verdict",
        Some(verdict("escalate", &digest)),
    )
    .await;
    assert_eq!(s, StatusCode::OK);
    let log = std::fs::read_to_string(dir.path().join("verdicts.jsonl")).unwrap();
    assert_eq!(log.lines().count(), 2);
    let (_, q) = json_call(&app, "GET", "/v1/queue", None).await;
    assert_eq!(q[0]["latest_verdict"], "escalate");
    let (_, history) = json_call(&app, "GET", "/v1/documents/negative-rule/verdicts", None).await;
    assert_eq!(history.as_array().unwrap().len(), 2);

    // a server-side reclassification with another gamma changes the explanation
    let (s, _) = json_call(
        &app,
        "POST",
        "/v1/documents/negative-rule/reclassify",
        Some(json!({"gamma": "0"})),
    )
    .await;
    assert_eq!(s, StatusCode::OK);
    let (s, err) = json_call(
        &app,
        "POST",
        "/v1/documents/negative-rule/verdict",
        Some(verdict("confirm-harmful", &digest)),
    )
    .await;
    assert_eq!(s, StatusCode::CONFLICT);
    assert_ne!(err["current_digest"], json!(digest));

    let (s, _) = json_call(
        &app,
        "POST",
        "/v1/documents/missing/verdict",
        Some(verdict("escalate", &digest)),
    )
    .await;
    assert_eq!(s, StatusCode::NOT_FOUND);
    let (s, _) = json_call(
        &app,
        "POST",
        "/v1/documents/negative-rule/verdict",
        Some(json!({"verdict": "maybe", "explanation_digest": digest})),
    )
    .await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
}

#[tokio::test]
async fn moderator_header_and_timestamp_validation() {
    let dir = tempfile::tempdir().unwrap();
    let app = app(dir.path());
    upload(&app, &fixtures::two_chain()).await;
    let digest = current_digest(&app, "two-chain").await;
    let req = Request::builder()
        .method("POST")
        .uri("/v1/documents/two-chain/verdict")
        .header("x-moderator-id", "mod-7")
        .body(Body::from(
            json!({"verdict": "confirm-harmful", "explanation_digest": digest}).to_string(),
        ))
        .unwrap();
    let resp = app.clone().oneshot(req).await.unwrap();
    assert_eq!(resp.status(), StatusCode::OK);
    let body: Value = serde_json::from_slice(&to_bytes(resp.into_body(), usize::MAX).await.unwrap()).unwrap();
    assert_eq!(body["verdict"]["moderator_id"], "mod-7");

    let bad =
        json!({"verdict": "escalate", "moderator_id": "m", "timestamp": "yesterday", "explanation_digest": digest});
    assert_eq!(
        json_call(&app, "POST", "/v1/documents/two-chain/verdict", Some(bad))
            .await
            .0,
        StatusCode::BAD_REQUEST
    );
    let anon = json!({"verdict": "escalate", "explanation_digest": digest});
    assert_eq!(
        json_call(&app, "POST", "/v1/documents/two-chain/verdict", Some(anon))
            .await
            .0,
        StatusCode::BAD_REQUEST
    );
}

#[tokio::test]
async fn restart_reconstructs_queue_and_log_prefix_is_stable() {
    let dir = tempfile::tempdir().unwrap();
    let before = {
        let app = app(dir.path());
        for doc in [
            fixtures::two_chain(),
            fixtures::age_link("15"),
            fixtures::negative_rule(),
        ] {
            assert_eq!(upload(&app, &doc).await, StatusCode::CREATED);
        }
        let digest = current_digest(&app, "age-link-15").await;
        let v = json!({"verdict": "confirm-harmful", "moderator_id": "m1", "explanation_digest": digest});
        assert_eq!(
            json_call(&app, "POST", "/v1/documents/age-link-15/verdict", Some(v))
                .await
                .0,
            StatusCode::OK
        );
        json_call(&app, "GET", "/v1/queue", None).await.1
    };
    let log_path = dir.path().join("verdicts.jsonl");
    let prefix = std::fs::read(&log_path).unwrap();
    let prefix_hash = Sha256::digest(&prefix);

    let app = app(dir.path());
    assert_eq!(json_call(&app, "GET", "/v1/queue", None).await.1, before);

    let digest = current_digest(&app, "two-chain").await;
    let v = json!({"verdict": "override-non-harmful", "moderator_id": "m2", "explanation_digest": digest, "note": "fiction"});
    assert_eq!(
        json_call(&app, "POST", "/v1/documents/two-chain/verdict", Some(v))
            .await
            .0,
        StatusCode::OK
    );
    let after = std::fs::read(&log_path).unwrap();
    assert!(after.len() > prefix.len());
    assert_eq!(Sha256::digest(&after[..prefix.len()]), prefix_hash);
}

#[tokio::test]
async fn torn_log_tail_is_dropped_and_appends_stay_parseable() {
    let dir = tempfile::tempdir().unwrap();
    let before = {
        let app = app(dir.path());
        upload(&app, &fixtures::two_chain()).await;
        let digest = current_digest(&app, "two-chain").await;
        let v = json!({"verdict": "escalate", "moderator_id": "m1", "explanation_digest": digest});
        json_call(&app, "POST", "/v1/documents/two-chain/verdict", Some(v)).await;
        json_call(&app, "GET", "/v1/queue", None).await.1
    };
    let log_path = dir.path().join("verdicts.jsonl");
    let committed = std::fs::read(&log_path).unwrap();
    let mut torn = committed.clone();
    torn.extend_from_slice(br#"{"doc_id":"two-chain","verd"#);
    std::fs::write(&log_path, &torn).unwrap();

    let app = app(dir.path());
    assert_eq!(json_call(&app, "GET", "/v1/queue", None).await.1, before);
    assert_eq!(std::fs::read(&log_path).unwrap(), committed);

    let digest = current_digest(&app, "two-chain").await;
    let v = json!({"verdict": "confirm-harmful", "moderator_id": "m2", "explanation_digest": digest});
    assert_eq!(
        json_call(&app, "POST", "/v1/documents/two-chain/verdict", Some(v))
            .await
            .0,
        StatusCode::OK
    );
    drop(app);
    let app = self::app(dir.path());
    let (_, history) = json_call(&app, "GET", "/v1/documents/two-chain/verdicts", None).await;
    assert_eq!(history.as_array().unwrap().len(), 2);
}
