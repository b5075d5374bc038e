use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{Path, Query, State};
use axum::http::{header, HeaderMap, HeaderValue, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use corelink_core::{
    classify_document, parse_document_json, render_html, render_json, ClassificationExplanation, ClassifyError,
    ClassifyOptions, CompiledLexicon, DocError, Document, Gamma, Mode, RenderTheme, ScoreError, SentenceScorer,
};
use serde::Deserialize;
use serde_json::json;
use tokio::sync::Mutex;
use tower_http::services::ServeDir;

use crate::store::{Status, Store, StoreError, VerdictInput};

/// Header consulted when a verdict body has no `moderator_id`.
pub const MODERATOR_HEADER: &str = "x-moderator-id";
pub const DIGEST_HEADER: &str = "x-explanation-digest";

pub struct ServiceConfig {
    pub lexicon: Arc<CompiledLexicon>,
    pub scorer: Arc<dyn SentenceScorer>,
    pub options: ClassifyOptions,
    /// Static review UI served under `/ui/` when set.
    pub ui_dir: Option<PathBuf>,
}

pub struct AppState {
    config: ServiceConfig,
    store: Mutex<Store>,
}

impl AppState {
    pub fn new(config: ServiceConfig, store: Store) -> Arc<Self> {
        Arc::new(AppState {
            config,
            store: Mutex::new(store),
        })
    }
}

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    code: &'static str,
    message: String,
    field: Option<String>,
    current_digest: Option<String>,
}

impl ApiError {
    fn new(status: StatusCode, code: &'static str, message: impl Into<String>) -> Self {
        ApiError {
            status,
            code,
            message: message.into(),
            field: None,
            current_digest: None,
        }
    }

    fn bad_request(message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, "bad_request", message)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let mut body = json!({"error": self.code, "message": self.message});
        if let Some(f) = self.field {
            body["field"] = json!(f);
        }
        if let Some(d) = self.current_digest {
            body["current_digest"] = json!(d);
        }
        (self.status, Json(body)).into_response()
    }
}

impl From<StoreError> for ApiError {
    fn from(e: StoreError) -> Self {
        match e {
            StoreError::NotFound(_) => ApiError::new(StatusCode::NOT_FOUND, "not_found", e.to_string()),
            StoreError::Duplicate(_) => ApiError::new(StatusCode::CONFLICT, "duplicate", e.to_string()),
            StoreError::StaleDigest { ref current } => ApiError {
                current_digest: Some(current.clone()),
                ..ApiError::new(StatusCode::CONFLICT, "stale_digest", e.to_string())
            },
            StoreError::InvalidVerdict(_) => ApiError::bad_request(e.to_string()),
            StoreError::Io { .. } | StoreError::Corrupt { .. } => {
                tracing::error!(error = %e, "store failure");
                ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "store", e.to_string())
            }
        }
    }
}

impl From<DocError> for ApiError {
    fn from(e: DocError) -> Self {
        let field = match &e {
            DocError::Json { offset, .. } => Some(format!("@{offset}")),
            other => other.field().map(str::to_string),
        };
        ApiError {
            field,
            ..ApiError::new(StatusCode::BAD_REQUEST, "validation", e.to_string())
        }
    }
}

impl From<ClassifyError> for ApiError {
    fn from(e: ClassifyError) -> Self {
        match &e {
            ClassifyError::Scoring(ScoreError::Remote { .. }) => {
                ApiError::new(StatusCode::BAD_GATEWAY, "scoring", e.to_string())
            }
            ClassifyError::Scoring(_) => ApiError::new(StatusCode::BAD_REQUEST, "scoring", e.to_string()),
            ClassifyError::Resolve(_) => ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "coref", e.to_string()),
        }
    }
}

async fn classify(
    state: &AppState,
    doc: Document,
    options: ClassifyOptions,
) -> Result<(Document, ClassificationExplanation), ApiError> {
    let lexicon = state.config.lexicon.clone();
    let scorer = state.config.scorer.clone();
    tokio::task::spawn_blocking(move || {
        let ex = classify_document(&doc, scorer.as_ref(), &lexicon, &options)?;
        Ok((doc, ex))
    })
    .await
    .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", e.to_string()))?
}

async fn post_document(State(state): State<Arc<AppState>>, body: Bytes) -> Result<Response, ApiError> {
    let doc = parse_document_json(&body)?;
    if state.store.lock().await.contains(&doc.doc_id) {
        return Err(StoreError::Duplicate(doc.doc_id).into());
    }
    let (doc, ex) = classify(&state, doc, state.config.options).await?;
    let entry = state.store.lock().await.insert(&doc, &ex)?;
    tracing::info!(doc_id = %entry.doc_id, label = %entry.predicted_label, "document classified");
    Ok((
        StatusCode::CREATED,
        Json(json!({"doc_id": entry.doc_id, "entry": entry})),
    )
        .into_response())
}

#[derive(Deserialize)]
struct QueueQuery {
    status: Option<String>,
}

async fn get_queue(State(state): State<Arc<AppState>>, Query(q): Query<QueueQuery>) -> Result<Response, ApiError> {
    let status = q
        .status
        .map(|s| s.parse::<Status>())
        .transpose()
        .map_err(ApiError::bad_request)?;
    Ok(Json(state.store.lock().await.queue(status)).into_response())
}

#[derive(Deserialize)]
struct FormatQuery {
    format: Option<String>,
}

async fn get_explanation(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
    Query(q): Query<FormatQuery>,
) -> Result<Response, ApiError> {
    let html = match q.format.as_deref() {
        None | Some("json") => false,
        Some("html") => true,
        Some(other) => return Err(ApiError::bad_request(format!("unknown format {other:?}"))),
    };
    let store = state.store.lock().await;
    let (ex, digest) = store.explanation(&id)?;
    let digest_value = HeaderValue::from_str(&digest).expect("hex digest");
    if html {
        let doc = store.document(&id)?;
        let page = render_html(&doc, &ex, &RenderTheme::default())
            .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "render", e.to_string()))?;
        let headers = [
            (
                header::CONTENT_TYPE,
                HeaderValue::from_static("text/html; charset=utf-8"),
            ),
            (header::HeaderName::from_static(DIGEST_HEADER), digest_value),
        ];
        Ok((headers, page).into_response())
    } else {
        let headers = [
            (header::CONTENT_TYPE, HeaderValue::from_static("application/json")),
            (header::HeaderName::from_static(DIGEST_HEADER), digest_value),
        ];
        Ok((headers, render_json(&ex)).into_response())
    }
}

async fn post_verdict(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
    headers: HeaderMap,
    body: Bytes,
) -> Result<Response, ApiError> {
    let mut input: VerdictInput =
        serde_json::from_slice(&body).map_err(|e| ApiError::bad_request(format!("invalid verdict body: {e}")))?;
    if input.moderator_id.is_none() {
        input.moderator_id = headers
            .get(MODERATOR_HEADER)
            .and_then(|v| v.to_str().ok())
            .map(str::to_string);
    }
    let mut store = state.store.lock().await;
    let verdict = store.record_verdict(&id, input)?;
    let entry = store.entry(&id).expect("verdict implies entry");
    Ok(Json(json!({"accepted": true, "verdict": verdict, "entry": entry})).into_response())
}

async fn get_verdicts(State(state): State<Arc<AppState>>, Path(id): Path<String>) -> Result<Response, ApiError> {
    Ok(Json(state.store.lock().await.verdicts(&id)?).into_response())
}

/// Optional overrides for a server-side reclassification.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct ReclassifyRequest {
    mode: Option<Mode>,
    gamma: Option<String>,
    threshold: Option<f64>,
}

async fn post_reclassify(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
    body: Bytes,
) -> Result<Response, ApiError> {
    let req: ReclassifyRequest = if body.iter().all(u8::is_ascii_whitespace) {
        ReclassifyRequest::default()
    } else {
        serde_json::from_slice(&body).map_err(|e| ApiError::bad_request(format!("invalid reclassify body: {e}")))?
    };
    let mut options = state.config.options;
    if let Some(m) = req.mode {
        options.mode = m;
    }
    if let Some(g) = req.gamma {
        options.policy.negative_weight = g.parse::<Gamma>().map_err(ApiError::bad_request)?;
    }
    if let Some(t) = req.threshold {
        options.threshold = t;
    }
    let doc = state.store.lock().await.document(&id)?;
    let (_, ex) = classify(&state, doc, options).await?;
    let entry = state.store.lock().await.replace_explanation(&id, &ex)?;
    Ok(Json(entry).into_response())
}

async fn health() -> &'static str {
    "ok"
}

pub fn router(state: Arc<AppState>) -> Router {
    let mut app = Router::new()
        .route("/v1/health", get(health))
        .route("/v1/documents", post(post_document))
        .route("/v1/queue", get(get_queue))
        .route("/v1/documents/{id}/explanation", get(get_explanation))
        .route("/v1/documents/{id}/verdict", post(post_verdict))
        .route("/v1/documents/{id}/verdicts", get(get_verdicts))
        .route("/v1/documents/{id}/reclassify", post(post_reclassify));
    if let Some(dir) = &state.config.ui_dir {
        app = app.nest_service("/ui", ServeDir::new(dir).append_index_html_on_directories(true));
    }
    app.with_state(state)
}

pub async fn serve(addr: SocketAddr, state: Arc<AppState>) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    tracing::info!(addr = %listener.local_addr()?, "listening");
    axum::serve(listener, router(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}
