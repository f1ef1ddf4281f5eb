//! JSON-over-HTTP facade for one dataset session.
//!
//! All routes live under `/api/v1`. Reads share the session; edits take it
//! exclusively, so they apply one at a time and no read ever observes a
//! half-applied overwrite.

use std::net::{IpAddr, Ipv4Addr, SocketAddr};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use axum::extract::rejection::{JsonRejection, PathRejection, QueryRejection};
use axum::extract::{Path as UrlPath, Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use tokio::sync::RwLock;

use tokenforge::api::{self, ErrorBody, OrderParams};
use tokenforge::format::validate_dataset;
use tokenforge::tokenizer::by_name;
use tokenforge::{DatasetManager, DatasetPaths, Error, ErrorKind, OrderConfig};

pub const PORT_ENV: &str = "TOKENFORGE_PORT";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SessionConfig {
    /// Dataset prefix, or the path of its `.bin` / `.idx`.
    pub dataset: PathBuf,
    #[serde(default)]
    pub order: OrderConfig,
    #[serde(default)]
    pub tokenizer: Option<String>,
    #[serde(default = "default_bind")]
    pub bind: IpAddr,
    #[serde(default = "default_port")]
    pub port: u16,
}

fn default_bind() -> IpAddr {
    IpAddr::V4(Ipv4Addr::LOCALHOST)
}

fn default_port() -> u16 {
    8600
}

#[derive(Debug, thiserror::Error)]
pub enum ServiceError {
    #[error("cannot read session config {path}: {detail}")]
    Config { path: PathBuf, detail: String },
    #[error("invalid port {0}: must be in 1..=65535")]
    InvalidPort(String),
    #[error("unknown tokenizer {0:?}")]
    UnknownTokenizer(String),
    #[error("cannot bind {addr}: {source}")]
    BindFailure {
        addr: SocketAddr,
        source: std::io::Error,
    },
    #[error(transparent)]
    Dataset(#[from] Error),
    #[error("server error: {0}")]
    Serve(std::io::Error),
}

impl SessionConfig {
    pub fn new(dataset: impl Into<PathBuf>) -> Self {
        SessionConfig {
            dataset: dataset.into(),
            order: OrderConfig::default(),
            tokenizer: None,
            bind: default_bind(),
            port: default_port(),
        }
    }

    pub fn load(path: &Path) -> Result<Self, ServiceError> {
        let config_err = |detail: String| ServiceError::Config {
            path: path.to_path_buf(),
            detail,
        };
        let text = std::fs::read_to_string(path).map_err(|e| config_err(e.to_string()))?;
        serde_json::from_str(&text).map_err(|e| config_err(e.to_string()))
    }

    /// Applies `TOKENFORGE_PORT` when it is set.
    pub fn with_env(mut self) -> Result<Self, ServiceError> {
        if let Ok(raw) = std::env::var(PORT_ENV) {
            self.port = parse_port(&raw)?;
        }
        Ok(self)
    }

    pub fn addr(&self) -> SocketAddr {
        SocketAddr::new(self.bind, self.port)
    }
}

pub fn parse_port(raw: &str) -> Result<u16, ServiceError> {
    match raw.trim().parse::<u16>() {
        Ok(p) if p >= 1 => Ok(p),
        _ => Err(ServiceError::InvalidPort(raw.to_string())),
    }
}

/// Validates the dataset and opens a session over it.
pub fn open_session(config: &SessionConfig) -> Result<DatasetManager, ServiceError> {
    if config.port == 0 {
        return Err(ServiceError::InvalidPort("0".into()));
    }
    let paths = DatasetPaths::new(&config.dataset);
    let violations = validate_dataset(&paths);
    if !violations.is_empty() {
        return Err(Error::DatasetInvalid(violations).into());
    }
    let tokenizer = match &config.tokenizer {
        Some(name) => Some(
            by_name(name)
                .map(Arc::from)
                .ok_or_else(|| ServiceError::UnknownTokenizer(name.clone()))?,
        ),
        None => None,
    };
    Ok(DatasetManager::open(paths)?
        .with_order_config(config.order)
        .with_tokenizer(tokenizer))
}

type Session = Arc<RwLock<DatasetManager>>;

/// An error response: status from the error kind, `{error, detail}` body.
pub struct ApiError(Error);

impl From<Error> for ApiError {
    fn from(e: Error) -> Self {
        ApiError(e)
    }
}

pub fn status_for(kind: ErrorKind) -> StatusCode {
    match kind {
        ErrorKind::BadRequest => StatusCode::BAD_REQUEST,
        ErrorKind::NotFound => StatusCode::NOT_FOUND,
        ErrorKind::Conflict => StatusCode::CONFLICT,
        ErrorKind::Internal => StatusCode::INTERNAL_SERVER_ERROR,
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let status = status_for(self.0.kind());
        if status.is_server_error() {
            tracing::error!(error = %self.0, "request failed");
        }
        (status, Json(ErrorBody::from(&self.0))).into_response()
    }
}

fn bad_request(detail: String) -> ApiError {
    ApiError(Error::InvalidArgument(detail))
}

fn body<T>(b: Result<Json<T>, JsonRejection>) -> Result<T, ApiError> {
    b.map(|Json(v)| v).map_err(|e| bad_request(e.body_text()))
}

fn query<T>(q: Result<Query<T>, QueryRejection>) -> Result<T, ApiError> {
    q.map(|Query(v)| v).map_err(|e| bad_request(e.body_text()))
}

fn id(p: Result<UrlPath<u64>, PathRejection>) -> Result<u64, ApiError> {
    p.map(|UrlPath(v)| v).map_err(|e| bad_request(e.body_text()))
}

type Reply = Result<Response, ApiError>;

fn ok<T: Serialize>(v: T) -> Reply {
    Ok(Json(v).into_response())
}

// Library calls are synchronous and may be long (index builds, exports), so
// they run on the blocking pool.
async fn read<T, F>(s: &Session, f: F) -> Reply
where
    T: Serialize + Send + 'static,
    F: FnOnce(&DatasetManager) -> tokenforge::Result<T> + Send + 'static,
{
    let s = s.clone();
    let out = tokio::task::spawn_blocking(move || f(&s.blocking_read()))
        .await
        .expect("handler panicked")?;
    ok(out)
}

async fn write<T, F>(s: &Session, f: F) -> Reply
where
    T: Serialize + Send + 'static,
    F: FnOnce(&mut DatasetManager) -> tokenforge::Result<T> + Send + 'static,
{
    let s = s.clone();
    let out = tokio::task::spawn_blocking(move || f(&mut s.blocking_write()))
        .await
        .expect("handler panicked")?;
    ok(out)
}

#[derive(Debug, Default, Deserialize)]
struct TextFlag {
    #[serde(default)]
    text: bool,
}

// Spelled out rather than flattening `OrderParams`: flattened fields lose
// their types under URL-encoded deserialization.
#[derive(Debug, Default, Deserialize)]
struct BatchParams {
    seed: Option<u64>,
    seq_len: Option<u64>,
    batch_size: Option<u64>,
    epochs: Option<u64>,
    #[serde(default)]
    text: bool,
}

impl BatchParams {
    fn order(&self) -> OrderParams {
        OrderParams {
            seed: self.seed,
            seq_len: self.seq_len,
            batch_size: self.batch_size,
            epochs: self.epochs,
        }
    }
}

async fn info(State(s): State<Session>) -> Reply {
    ok(api::dataset_info(&*s.read().await))
}

async fn sequence(
    State(s): State<Session>,
    p: Result<UrlPath<u64>, PathRejection>,
    q: Result<Query<TextFlag>, QueryRejection>,
) -> Reply {
    let (seq, flag) = (id(p)?, query(q)?);
    read(&s, move |m| m.sequence_view(seq, flag.text)).await
}

async fn document(
    State(s): State<Session>,
    p: Result<UrlPath<u64>, PathRejection>,
    q: Result<Query<TextFlag>, QueryRejection>,
) -> Reply {
    let (doc, flag) = (id(p)?, query(q)?);
    read(&s, move |m| m.document_view(doc, flag.text)).await
}

async fn batch(
    State(s): State<Session>,
    p: Result<UrlPath<u64>, PathRejection>,
    q: Result<Query<BatchParams>, QueryRejection>,
) -> Reply {
    let (step, params) = (id(p)?, query(q)?);
    read(&s, move |m| {
        let config = params.order().resolve(m.default_order());
        m.batch_view(step, Some(config), params.text)
    })
    .await
}

async fn order(State(s): State<Session>, q: Result<Query<OrderParams>, QueryRejection>) -> Reply {
    let params = query(q)?;
    read(&s, move |m| api::order_info(m, &params)).await
}

macro_rules! json_route {
    ($name:ident, $req:ty, $mode:ident, $handler:path) => {
        async fn $name(State(s): State<Session>, b: Result<Json<$req>, JsonRejection>) -> Reply {
            let req = body(b)?;
            $mode(&s, move |m| $handler(m, &req)).await
        }
    };
}

json_route!(sample, api::SampleRequest, read, api::sample);
json_route!(count, api::Query, read, api::count);
json_route!(contains, api::Query, read, api::contains);
json_route!(positions, api::PositionsRequest, read, api::positions);
json_route!(next, api::Query, read, api::next_tokens);
json_route!(generate, api::GenerateRequest, read, api::generate);
json_route!(overwrite, api::OverwriteRequest, write, api::overwrite);
json_route!(inject, api::InjectRequest, write, api::inject);
json_route!(splice, api::SpliceRequest, read, api::splice);
json_route!(export, api::ExportRequest, read, api::export);
json_route!(switch, api::SwitchRequest, write, api::switch);

async fn build_index(State(s): State<Session>) -> Reply {
    read(&s, api::build_index).await
}

async fn no_route() -> Response {
    let body = ErrorBody {
        error: "NoSuchEndpoint".into(),
        detail: "no such endpoint".into(),
    };
    (StatusCode::NOT_FOUND, Json(body)).into_response()
}

pub fn router(manager: DatasetManager) -> Router {
    let session: Session = Arc::new(RwLock::new(manager));
    let v1 = Router::new()
        .route("/dataset/info", get(info))
        .route("/dataset/switch", post(switch))
        .route("/sequences/{id}", get(sequence))
        .route("/documents/{id}", get(document))
        .route("/batches/{step}", get(batch))
        .route("/order", get(order))
        .route("/sample", post(sample))
        .route("/search/count", post(count))
        .route("/search/contains", post(contains))
        .route("/search/positions", post(positions))
        .route("/search/next", post(next))
        .route("/search/generate", post(generate))
        .route("/edits/overwrite", post(overwrite))
        .route("/edits/splice", post(splice))
        .route("/edits/inject", post(inject))
        .route("/export", post(export))
        .route("/index/build", post(build_index));
    Router::new()
        .nest("/api/v1", v1)
        .fallback(no_route)
        .with_state(session)
}

/// Binds the configured address and serves until Ctrl-C.
pub async fn serve(config: SessionConfig) -> Result<(), ServiceError> {
    let manager = open_session(&config)?;
    let addr = config.addr();
    let listener = tokio::net::TcpListener::bind(addr)
        .await
        .map_err(|source| ServiceError::BindFailure { addr, source })?;
    tracing::info!(%addr, dataset = %config.dataset.display(), "serving");
    axum::serve(listener, router(manager))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
        .map_err(ServiceError::Serve)
}
