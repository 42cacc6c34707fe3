//! HTTP service over the mapping pipeline and the session store.
//!
//! Routes, all JSON:
//!
//! | method | path | |
//! |---|---|---|
//! | POST | `/v1/sessions` | run the pipeline; body is `text/csv` or `{"columns": [...]}` |
//! | GET | `/v1/sessions` | list session ids |
//! | GET | `/v1/sessions/{id}` | |
//! | POST | `/v1/sessions/{id}/corrections` | `{"column": .., "attribute": ..}` |
//! | POST | `/v1/sessions/{id}/finalize` | returns the session and the final document |
//! | POST | `/v1/sessions/{id}/reopen` | |
//! | GET | `/v1/sessions/{id}/document` | final document of a finalized session |
//! | GET | `/v1/schema` | object types and attributes |
//! | GET | `/healthz` | |

use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{Path, Request, State};
use axum::http::{header, HeaderMap, StatusCode};
use axum::middleware::{self, Next};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use schemamatch_core::ingest::{ingest_reader, IngestError};
use schemamatch_core::session::{SessionError, StoreError};
use schemamatch_core::{
    FinalDocument, MappingSession, ObjectType, Pipeline, PipelineError, SessionStore, SourceColumn,
};
use serde::{Deserialize, Serialize};
use tower_http::cors::CorsLayer;
use tower_http::services::{ServeDir, ServeFile};

#[derive(Debug, Clone, Default)]
pub struct ServerOptions {
    /// Required as `Authorization: Bearer <token>` on `/v1` routes when set.
    pub token: Option<String>,
    /// Static files served for any path not matched by the API.
    pub ui_dir: Option<PathBuf>,
    pub cors: bool,
}

#[derive(Clone)]
pub struct AppState {
    pipeline: Arc<Pipeline>,
    store: Arc<SessionStore>,
    token: Option<Arc<str>>,
}

impl AppState {
    pub fn new(pipeline: Pipeline, store: SessionStore) -> Self {
        Self {
            pipeline: Arc::new(pipeline),
            store: Arc::new(store),
            token: None,
        }
    }

    pub fn store(&self) -> &SessionStore {
        &self.store
    }
}

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    message: String,
}

impl ApiError {
    fn new(status: StatusCode, message: impl Into<String>) -> Self {
        Self {
            status,
            message: message.into(),
        }
    }
}

#[derive(Serialize)]
struct ErrorBody<'a> {
    error: &'a str,
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(ErrorBody { error: &self.message })).into_response()
    }
}

impl From<StoreError> for ApiError {
    fn from(e: StoreError) -> Self {
        let status = match &e {
            StoreError::NotFound(_) => StatusCode::NOT_FOUND,
            StoreError::InvalidId(_) => StatusCode::BAD_REQUEST,
            StoreError::Session(SessionError::Finalized | SessionError::NotFinalized) => StatusCode::CONFLICT,
            StoreError::Session(_) => StatusCode::UNPROCESSABLE_ENTITY,
            StoreError::Io(_) | StoreError::Corrupt { .. } => StatusCode::INTERNAL_SERVER_ERROR,
        };
        Self::new(status, e.to_string())
    }
}

impl From<PipelineError> for ApiError {
    fn from(e: PipelineError) -> Self {
        let status = match e {
            PipelineError::DuplicateColumn(_) => StatusCode::UNPROCESSABLE_ENTITY,
            _ => StatusCode::INTERNAL_SERVER_ERROR,
        };
        Self::new(status, e.to_string())
    }
}

impl From<IngestError> for ApiError {
    fn from(e: IngestError) -> Self {
        Self::new(StatusCode::BAD_REQUEST, e.to_string())
    }
}

type ApiResult<T> = Result<Json<T>, ApiError>;

async fn blocking<T, F>(f: F) -> Result<T, ApiError>
where
    F: FnOnce() -> Result<T, ApiError> + Send + 'static,
    T: Send + 'static,
{
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))?
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum ColumnsBody {
    Wrapped { columns: Vec<SourceColumn> },
    Bare(Vec<SourceColumn>),
}

fn parse_columns(headers: &HeaderMap, body: &[u8], sample_limit: usize) -> Result<Vec<SourceColumn>, ApiError> {
    let content_type = headers
        .get(header::CONTENT_TYPE)
        .and_then(|v| v.to_str().ok())
        .unwrap_or("application/json");
    if content_type.starts_with("text/csv") {
        return Ok(ingest_reader(body, sample_limit)?.columns);
    }
    if !content_type.starts_with("application/json") {
        return Err(ApiError::new(
            StatusCode::UNSUPPORTED_MEDIA_TYPE,
            format!("expected text/csv or application/json, got {content_type}"),
        ));
    }
    match serde_json::from_slice(body) {
        Ok(ColumnsBody::Wrapped { columns } | ColumnsBody::Bare(columns)) => Ok(columns),
        Err(e) => Err(ApiError::new(
            StatusCode::BAD_REQUEST,
            format!("invalid column list: {e}"),
        )),
    }
}

async fn create_session(
    State(state): State<AppState>,
    headers: HeaderMap,
    body: Bytes,
) -> Result<(StatusCode, Json<MappingSession>), ApiError> {
    let columns = parse_columns(&headers, &body, state.pipeline.config().sample_limit)?;
    let session = blocking(move || {
        let session = state.pipeline.run(&columns)?;
        state.store.save(&session)?;
        Ok(session)
    })
    .await?;
    tracing::info!(id = %session.id, columns = session.columns.len(), "session created");
    Ok((StatusCode::CREATED, Json(session)))
}

async fn list_sessions(State(state): State<AppState>) -> ApiResult<Vec<String>> {
    blocking(move || Ok(state.store.list()?)).await.map(Json)
}

async fn get_session(State(state): State<AppState>, Path(id): Path<String>) -> ApiResult<MappingSession> {
    blocking(move || Ok(state.store.load(&id)?)).await.map(Json)
}

#[derive(Debug, Serialize, Deserialize)]
pub struct CorrectionRequest {
    pub column: String,
    pub attribute: String,
}

async fn post_correction(
    State(state): State<AppState>,
    Path(id): Path<String>,
    Json(req): Json<CorrectionRequest>,
) -> ApiResult<MappingSession> {
    blocking(move || {
        Ok(state
            .store
            .apply_correction(&id, &req.column, &req.attribute, state.pipeline.schema())?)
    })
    .await
    .map(Json)
}

#[derive(Debug, Serialize, Deserialize)]
pub struct FinalizeResponse {
    pub session: MappingSession,
    pub document: FinalDocument,
}

async fn finalize(State(state): State<AppState>, Path(id): Path<String>) -> ApiResult<FinalizeResponse> {
    blocking(move || {
        let (session, document) = state.store.finalize(&id)?;
        Ok(FinalizeResponse { session, document })
    })
    .await
    .map(Json)
}

async fn reopen(State(state): State<AppState>, Path(id): Path<String>) -> ApiResult<MappingSession> {
    blocking(move || Ok(state.store.reopen(&id)?)).await.map(Json)
}

async fn document(State(state): State<AppState>, Path(id): Path<String>) -> ApiResult<FinalDocument> {
    blocking(move || {
        let session = state.store.load(&id)?;
        if !session.is_finalized() {
            return Err(StoreError::Session(SessionError::NotFinalized).into());
        }
        Ok(session.final_document())
    })
    .await
    .map(Json)
}

#[derive(Debug, Serialize, Deserialize)]
pub struct SchemaResponse {
    pub object_types: Vec<ObjectType>,
}

async fn schema(State(state): State<AppState>) -> Json<SchemaResponse> {
    Json(SchemaResponse {
        object_types: state.pipeline.schema().to_vec(),
    })
}

async fn healthz() -> Json<serde_json::Value> {
    Json(serde_json::json!({ "status": "ok" }))
}

async fn require_token(State(state): State<AppState>, req: Request, next: Next) -> Response {
    if let Some(token) = &state.token {
        let presented = req
            .headers()
            .get(header::AUTHORIZATION)
            .and_then(|v| v.to_str().ok())
            .and_then(|v| v.strip_prefix("Bearer "));
        if presented != Some(token.as_ref()) {
            return ApiError::new(StatusCode::UNAUTHORIZED, "missing or invalid bearer token").into_response();
        }
    }
    next.run(req).await
}

pub fn router(mut state: AppState, options: &ServerOptions) -> Router {
    state.token = options.token.as_deref().map(Arc::from);
    let api = Router::new()
        .route("/sessions", post(create_session).get(list_sessions))
        .route("/sessions/{id}", get(get_session))
        .route("/sessions/{id}/corrections", post(post_correction))
        .route("/sessions/{id}/finalize", post(finalize))
        .route("/sessions/{id}/reopen", post(reopen))
        .route("/sessions/{id}/document", get(document))
        .route("/schema", get(schema))
        .route_layer(middleware::from_fn_with_state(state.clone(), require_token));
    let mut app = Router::new()
        .nest("/v1", api)
        .route("/healthz", get(healthz))
        .with_state(state);
    if let Some(dir) = &options.ui_dir {
        app = app.fallback_service(ServeDir::new(dir).fallback(ServeFile::new(dir.join("index.html"))));
    }
    if options.cors {
        app = app.layer(CorsLayer::permissive());
    }
    app
}

/// Binds and serves until ctrl-c.
pub async fn serve(state: AppState, options: ServerOptions, addr: SocketAddr) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    tracing::info!(addr = %listener.local_addr()?, "listening");
    axum::serve(listener, router(state, &options))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}
