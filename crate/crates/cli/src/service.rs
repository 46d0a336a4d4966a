//! Read-only HTTP query service over an engine snapshot, plus an
//! append-only log of pairwise preferences posted by clients.

use std::fs::{File, OpenOptions};
use std::io::Write;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, RwLock};

use axum::extract::{Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use fontpair::study_analytics::ComparisonRecord;
use fontpair::{Engine, Method, ScoredFont};
use log::info;
use serde::{Deserialize, Serialize};

pub const DEFAULT_N: usize = 10;

/// Shared state behind every request. The engine is immutable; a new one
/// can be swapped in whole.
pub struct AppState {
    engine: RwLock<Arc<Engine>>,
    log: Mutex<ComparisonLog>,
}

struct ComparisonLog {
    path: PathBuf,
    file: File,
}

impl AppState {
    pub fn new(engine: Engine, comparison_log: impl AsRef<Path>) -> std::io::Result<Self> {
        let path = comparison_log.as_ref().to_path_buf();
        let file = OpenOptions::new().create(true).append(true).open(&path)?;
        Ok(Self {
            engine: RwLock::new(Arc::new(engine)),
            log: Mutex::new(ComparisonLog { path, file }),
        })
    }

    pub fn engine(&self) -> Arc<Engine> {
        self.engine.read().expect("engine lock poisoned").clone()
    }

    /// Publishes a new engine; requests already running keep the old one.
    pub fn replace_engine(&self, engine: Engine) {
        *self.engine.write().expect("engine lock poisoned") = Arc::new(engine);
    }

    pub fn comparison_log_path(&self) -> PathBuf {
        self.log.lock().expect("log lock poisoned").path.clone()
    }

    fn append(&self, record: &ComparisonRecord) -> std::io::Result<()> {
        let mut log = self.log.lock().expect("log lock poisoned");
        let mut line = record.to_line();
        line.push('\n');
        log.file.write_all(line.as_bytes())?;
        log.file.flush()
    }
}

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    message: String,
}

impl ApiError {
    fn bad_request(message: impl Into<String>) -> Self {
        Self {
            status: StatusCode::BAD_REQUEST,
            message: message.into(),
        }
    }
}

impl From<fontpair::Error> for ApiError {
    fn from(e: fontpair::Error) -> Self {
        use fontpair::Error as E;
        let status = match &e {
            E::UnknownFont(_) => StatusCode::NOT_FOUND,
            E::UnknownMethod(_) | E::InvalidArgument(_) => StatusCode::BAD_REQUEST,
            _ => StatusCode::INTERNAL_SERVER_ERROR,
        };
        Self {
            status,
            message: e.to_string(),
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(serde_json::json!({ "error": self.message }))).into_response()
    }
}

type ApiResult<T> = Result<Json<T>, ApiError>;

fn required<'a>(value: &'a Option<String>, name: &str) -> Result<&'a str, ApiError> {
    value
        .as_deref()
        .ok_or_else(|| ApiError::bad_request(format!("missing query parameter `{name}`")))
}

fn method(value: &Option<String>) -> Result<Method, ApiError> {
    Ok(required(value, "method")?.parse::<Method>()?)
}

#[derive(Debug, Deserialize)]
pub struct FontsQuery {
    role: Option<String>,
}

async fn fonts(State(state): State<Arc<AppState>>, Query(q): Query<FontsQuery>) -> ApiResult<Vec<String>> {
    let engine = state.engine();
    let ids = match q.role.as_deref().unwrap_or("header") {
        "header" => engine.header_ids(),
        "follower" => engine.follower_ids(),
        other => return Err(ApiError::bad_request(format!("unknown role `{other}`, expected header or follower"))),
    };
    Ok(Json(ids.into_iter().map(String::from).collect()))
}

#[derive(Debug, Deserialize)]
pub struct RecommendQuery {
    header: Option<String>,
    method: Option<String>,
    n: Option<String>,
}

async fn recommend(State(state): State<Arc<AppState>>, Query(q): Query<RecommendQuery>) -> ApiResult<Vec<ScoredFont>> {
    let header = required(&q.header, "header")?;
    let method = method(&q.method)?;
    let n = match q.n.as_deref() {
        None => DEFAULT_N,
        Some(s) => s
            .parse::<usize>()
            .map_err(|_| ApiError::bad_request(format!("n must be a non-negative integer, got `{s}`")))?,
    };
    Ok(Json(state.engine().recommend(method, header, n)?))
}

#[derive(Debug, Deserialize)]
pub struct ScoreQuery {
    header: Option<String>,
    follower: Option<String>,
    method: Option<String>,
}

async fn score(State(state): State<Arc<AppState>>, Query(q): Query<ScoreQuery>) -> ApiResult<f64> {
    let header = required(&q.header, "header")?;
    let follower = required(&q.follower, "follower")?;
    let method = method(&q.method)?;
    Ok(Json(state.engine().score(method, header, follower)?))
}

/// A rater's choice between two followers shown for the same header.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonInput {
    pub header: String,
    pub follower_a: String,
    pub follower_b: String,
    /// `"a"`, `"b"`, or the chosen follower's id.
    pub choice: String,
}

impl ComparisonInput {
    /// The log record: the header is the comparison id and the two
    /// followers take the place of the compared items.
    pub fn to_record(&self) -> Result<ComparisonRecord, ApiError> {
        if self.follower_a == self.follower_b {
            return Err(ApiError::bad_request("follower_a and follower_b must differ"));
        }
        let first = match self.choice.as_str() {
            "a" | "A" => true,
            "b" | "B" => false,
            c if c == self.follower_a => true,
            c if c == self.follower_b => false,
            c => return Err(ApiError::bad_request(format!("choice `{c}` names neither follower"))),
        };
        let (hit1, hit2) = if first { (1, 0) } else { (0, 1) };
        Ok(ComparisonRecord::new(&self.header, &self.follower_a, &self.follower_b, hit1, hit2))
    }
}

async fn comparisons(
    State(state): State<Arc<AppState>>,
    Json(input): Json<ComparisonInput>,
) -> Result<(StatusCode, Json<ComparisonRecord>), ApiError> {
    let engine = state.engine();
    let snapshot = engine.snapshot();
    if !snapshot.headers.contains(&input.header) {
        return Err(fontpair::Error::UnknownFont(input.header).into());
    }
    for f in [&input.follower_a, &input.follower_b] {
        if !snapshot.followers.contains(f) {
            return Err(fontpair::Error::UnknownFont(f.clone()).into());
        }
    }
    let record = input.to_record()?;
    state.append(&record).map_err(|e| ApiError {
        status: StatusCode::INTERNAL_SERVER_ERROR,
        message: format!("could not append to comparison log: {e}"),
    })?;
    Ok((StatusCode::CREATED, Json(record)))
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/fonts", get(fonts))
        .route("/recommend", get(recommend))
        .route("/score", get(score))
        .route("/comparisons", post(comparisons))
        .with_state(state)
}

/// Binds `addr` and serves until interrupted.
pub async fn serve(state: Arc<AppState>, addr: SocketAddr) -> anyhow::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr)
        .await
        .map_err(|e| anyhow::anyhow!("cannot bind {addr}: {e}"))?;
    info!("listening on {}", listener.local_addr()?);
    axum::serve(listener, router(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
    Ok(())
}
