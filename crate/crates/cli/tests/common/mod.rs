#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::sync::Arc;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use memebot_cli::commands::{load_pipeline, train, TrainArgs};
use memebot_cli::service::{router, AppState};
use memebot_core::models::ModelKind;
use tempfile::TempDir;
use tower::ServiceExt;

pub fn data_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data")
}

/// Trains desk-architecture checkpoints on the bundled corpus for a couple of
/// epochs and wraps them in a router. The directory also serves as the
/// static dir.
pub fn desk_service() -> (Router, TempDir) {
    let dir = TempDir::new().unwrap();
    let cfg = dir.path().join("cfg.json");
    std::fs::write(&cfg, r#"{"epochs": 2, "seed": 5}"#).unwrap();
    let args = TrainArgs {
        config: Some(cfg),
        data: data_dir().join("corpus.jsonl"),
        catalog: data_dir().join("catalog.json"),
        out: dir.path().to_path_buf(),
    };
    train(ModelKind::Selector, &args).unwrap();
    train(ModelKind::Generator, &args).unwrap();
    let pipeline = load_pipeline(dir.path(), &args.catalog).unwrap();
    let mut state = AppState::new(pipeline);
    state.static_dir = Some(dir.path().join("static"));
    std::fs::create_dir_all(dir.path().join("static")).unwrap();
    (router(Arc::new(state)), dir)
}

pub async fn call(app: &Router, req: Request<Body>) -> (StatusCode, serde_json::Value, Vec<u8>) {
    let res = app.clone().oneshot(req).await.unwrap();
    let status = res.status();
    let bytes = axum::body::to_bytes(res.into_body(), usize::MAX)
        .await
        .unwrap()
        .to_vec();
    let json = serde_json::from_slice(&bytes).unwrap_or(serde_json::Value::Null);
    (status, json, bytes)
}

pub fn get(uri: &str) -> Request<Body> {
    Request::get(uri).body(Body::empty()).unwrap()
}

pub fn post(uri: &str, body: &str) -> Request<Body> {
    Request::post(uri)
        .header("content-type", "application/json")
        .body(Body::from(body.to_string()))
        .unwrap()
}
