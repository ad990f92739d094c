//! JSON HTTP API over a loaded [`MemePipeline`].

use std::hash::{DefaultHasher, Hash, Hasher};
use std::path::PathBuf;
use std::sync::Arc;
use std::time::Instant;

use axum::body::Bytes;
use axum::extract::{Path, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use base64::Engine;
use memebot_core::corpus::TemplateId;
use memebot_core::generation::{
    generate_meme, DecodeParams, GenerationError, MemePipeline, DEFAULT_ALPHA, DEFAULT_BEAM_SIZE,
};
use memebot_core::models::select_template;
use serde::{Deserialize, Serialize};

use crate::commands::{resolve_template, CliError};

pub const DEFAULT_TOP_K: usize = 5;

pub struct AppState {
    pub pipeline: MemePipeline,
    /// Where `?format=url` images are written; that mode is refused without it.
    pub static_dir: Option<PathBuf>,
    pub top_k: usize,
}

impl AppState {
    pub fn new(pipeline: MemePipeline) -> Self {
        Self {
            pipeline,
            static_dir: None,
            top_k: DEFAULT_TOP_K,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GenerateRequest {
    pub sentence: String,
    /// Template name; absent or `auto` lets the selector choose.
    #[serde(default)]
    pub template: Option<String>,
    #[serde(default)]
    pub beam_size: Option<usize>,
    #[serde(default)]
    pub alpha: Option<f64>,
    #[serde(default)]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedTemplate {
    pub id: usize,
    pub name: String,
    pub probability: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerateResponse {
    pub template: String,
    pub template_id: usize,
    /// Selector probability of the template used, forced or not.
    pub probability: f64,
    pub forced: bool,
    pub top_k: Vec<RankedTemplate>,
    pub caption: String,
    /// Base64 PNG, unless `?format=url`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub image: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub image_url: Option<String>,
    pub score: f64,
    pub seed: u64,
    pub image_variant: usize,
    pub latency_ms: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ErrorBody {
    pub error: String,
    pub detail: String,
}

pub struct ApiError {
    status: StatusCode,
    body: ErrorBody,
}

impl ApiError {
    fn new(status: StatusCode, code: &str, detail: impl Into<String>) -> Self {
        Self {
            status,
            body: ErrorBody {
                error: code.to_string(),
                detail: detail.into(),
            },
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(self.body)).into_response()
    }
}

#[derive(Debug, Deserialize)]
pub struct FormatQuery {
    #[serde(default)]
    format: Option<String>,
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/health", get(health))
        .route("/templates", get(templates))
        .route("/templates/{id}/thumbnail", get(thumbnail))
        .route("/generate", post(generate))
        .route("/static/{name}", get(static_file))
        .fallback(|| async { ApiError::new(StatusCode::NOT_FOUND, "not_found", "no such route") })
        .with_state(state)
}

async fn health() -> Json<serde_json::Value> {
    Json(serde_json::json!({ "status": "ok" }))
}

async fn templates(State(state): State<Arc<AppState>>) -> Json<serde_json::Value> {
    let list: Vec<_> = state
        .pipeline
        .catalog
        .entries()
        .iter()
        .enumerate()
        .map(|(id, e)| {
            serde_json::json!({
                "id": id,
                "name": e.name,
                "thumbnail": format!("/templates/{id}/thumbnail"),
            })
        })
        .collect();
    Json(serde_json::json!({ "templates": list }))
}

fn png(bytes: Vec<u8>) -> Response {
    ([(header::CONTENT_TYPE, "image/png")], bytes).into_response()
}

async fn thumbnail(State(state): State<Arc<AppState>>, Path(id): Path<usize>) -> Result<Response, ApiError> {
    let entry = state
        .pipeline
        .catalog
        .get(TemplateId(id))
        .ok_or_else(|| ApiError::new(StatusCode::NOT_FOUND, "not_found", format!("no template {id}")))?;
    let path = &entry.image_paths[0];
    let bytes = tokio::fs::read(path).await.map_err(|e| {
        ApiError::new(
            StatusCode::INTERNAL_SERVER_ERROR,
            "internal",
            format!("{}: {e}", path.display()),
        )
    })?;
    Ok(png(bytes))
}

async fn static_file(State(state): State<Arc<AppState>>, Path(name): Path<String>) -> Result<Response, ApiError> {
    let not_found = || ApiError::new(StatusCode::NOT_FOUND, "not_found", format!("no file {name}"));
    let dir = state.static_dir.as_ref().ok_or_else(not_found)?;
    if name.is_empty() || !name.chars().all(|c| c.is_ascii_alphanumeric() || c == '.') || name.starts_with('.') {
        return Err(not_found());
    }
    let bytes = tokio::fs::read(dir.join(&name)).await.map_err(|_| not_found())?;
    Ok(png(bytes))
}

async fn generate(
    State(state): State<Arc<AppState>>,
    Query(query): Query<FormatQuery>,
    body: Bytes,
) -> Result<Json<GenerateResponse>, ApiError> {
    let started = Instant::now();
    let req: GenerateRequest = serde_json::from_slice(&body)
        .map_err(|e| ApiError::new(StatusCode::BAD_REQUEST, "bad_request", e.to_string()))?;
    let as_url = match query.format.as_deref() {
        None | Some("base64") => false,
        Some("url") if state.static_dir.is_some() => true,
        Some("url") => {
            return Err(ApiError::new(
                StatusCode::BAD_REQUEST,
                "bad_request",
                "url format is not enabled",
            ));
        }
        Some(other) => {
            return Err(ApiError::new(
                StatusCode::BAD_REQUEST,
                "bad_request",
                format!("unknown format {other:?}"),
            ));
        }
    };
    if req.sentence.trim().is_empty() {
        return Err(ApiError::new(
            StatusCode::BAD_REQUEST,
            "empty_sentence",
            "sentence must not be empty",
        ));
    }
    let forced = resolve_template(&state.pipeline.catalog, req.template.as_deref()).map_err(|e| match e {
        CliError::UnknownTemplate(name) => ApiError::new(
            StatusCode::UNPROCESSABLE_ENTITY,
            "unknown_template",
            format!("no template named {name:?}"),
        ),
        other => ApiError::new(StatusCode::BAD_REQUEST, "bad_request", other.to_string()),
    })?;
    let params = DecodeParams {
        beam_size: req.beam_size.unwrap_or(DEFAULT_BEAM_SIZE),
        alpha: req.alpha.unwrap_or(DEFAULT_ALPHA),
        forced_template: forced,
        ..DecodeParams::default()
    };
    let seed = req.seed.unwrap_or(0);
    let worker = state.clone();
    let sentence = req.sentence.clone();
    let (meme, ranking) = tokio::task::spawn_blocking(move || {
        let meme = generate_meme(&sentence, &worker.pipeline, &params, seed)?;
        let ranking = if meme.ranking.is_empty() {
            select_template(&sentence, &worker.pipeline.selector, &worker.pipeline.catalog)?
        } else {
            meme.ranking.clone()
        };
        Ok::<_, GenerationError>((meme, ranking))
    })
    .await
    .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", e.to_string()))?
    .map_err(|e| match e {
        GenerationError::EmptyInput => ApiError::new(StatusCode::BAD_REQUEST, "empty_sentence", e.to_string()),
        GenerationError::InvalidParams(_) => ApiError::new(StatusCode::BAD_REQUEST, "invalid_params", e.to_string()),
        GenerationError::UnknownTemplate { .. } => {
            ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "unknown_template", e.to_string())
        }
        _ => ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", e.to_string()),
    })?;

    let catalog = &state.pipeline.catalog;
    let probability = ranking.iter().find(|r| r.0 == meme.template).map_or(0.0, |r| r.1);
    let top_k = ranking
        .iter()
        .take(state.top_k)
        .map(|&(id, p)| RankedTemplate {
            id: id.0,
            name: catalog.get(id).expect("ranked ids come from the catalog").name.clone(),
            probability: p,
        })
        .collect();
    let (image, image_url) = if as_url {
        let dir = state.static_dir.as_ref().expect("checked above");
        let mut h = DefaultHasher::new();
        meme.png.hash(&mut h);
        let name = format!("{:016x}.png", h.finish());
        tokio::fs::write(dir.join(&name), &meme.png)
            .await
            .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", e.to_string()))?;
        (None, Some(format!("/static/{name}")))
    } else {
        (Some(base64::engine::general_purpose::STANDARD.encode(&meme.png)), None)
    };
    Ok(Json(GenerateResponse {
        template: meme.template_name,
        template_id: meme.template.0,
        probability,
        forced: forced.is_some(),
        top_k,
        caption: meme.caption,
        image,
        image_url,
        score: meme.score,
        seed,
        image_variant: meme.image_variant,
        latency_ms: started.elapsed().as_secs_f64() * 1000.0,
    }))
}

/// Binds and serves until the process is stopped.
pub async fn serve(addr: std::net::SocketAddr, state: AppState) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    log::info!("listening on http://{}", listener.local_addr()?);
    axum::serve(listener, router(Arc::new(state))).await
}
