#![allow(dead_code)]

use std::path::PathBuf;
use std::sync::Arc;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use tower::ServiceExt;

use slicelens::ingest::load_dataset_with;
use slicelens::Engine;
use slicelens_core::corpus::StoreOptions;
use slicelens_core::projection::{project_store, TsneConfig};
use slicelens_core::{AnalysisContext, DatasetStore, DiscoveryConfig, DocumentRecord};

pub fn fixture_path() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/frozen.jsonl")
}

/// Engine over the frozen fixture with its t-SNE projection and a default
/// discovery run.
pub fn frozen_engine() -> Arc<Engine> {
    let loaded = load_dataset_with(&fixture_path(), &StoreOptions::default()).unwrap();
    let projection = project_store(&loaded.store, &TsneConfig::default()).unwrap();
    let ctx = AnalysisContext::build(loaded.store, None).unwrap();
    let engine = Engine::new(ctx, projection, loaded.sha256);
    engine.run_discovery(DiscoveryConfig::default()).unwrap();
    Arc::new(engine)
}

pub fn engine_from(records: Vec<DocumentRecord>, min_df: Option<usize>) -> Arc<Engine> {
    let store = DatasetStore::build(records).unwrap();
    let projection = project_store(&store, &TsneConfig::default()).unwrap();
    Arc::new(Engine::new(AnalysisContext::build(store, min_df).unwrap(), projection, "test".into()))
}

pub async fn call(app: &Router, method: &str, uri: &str, body: Option<serde_json::Value>) -> (StatusCode, Vec<u8>) {
    let builder = Request::builder().method(method).uri(uri);
    let req = match body {
        Some(v) => builder
            .header("content-type", "application/json")
            .body(Body::from(serde_json::to_vec(&v).unwrap())),
        None => builder.body(Body::empty()),
    }
    .unwrap();
    let res = app.clone().oneshot(req).await.unwrap();
    let status = res.status();
    let bytes = res.into_body().collect().await.unwrap().to_bytes().to_vec();
    (status, bytes)
}

pub fn json(bytes: &[u8]) -> serde_json::Value {
    serde_json::from_slice(bytes).unwrap()
}

/// Percent-encodes a query parameter value.
pub fn encode(s: &str) -> String {
    let mut out = String::new();
    for b in s.bytes() {
        if b.is_ascii_alphanumeric() || matches!(b, b'-' | b'_' | b'.' | b'~') {
            out.push(b as char);
        } else {
            out.push_str(&format!("%{b:02X}"));
        }
    }
    out
}
