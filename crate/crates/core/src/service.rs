//! Read-only HTTP JSON API over a loaded store: entity pages, keyword
//! search, the query endpoint and compare views.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant, SystemTime, UNIX_EPOCH};

use axum::body::Body;
use axum::extract::{Query, RawPathParams, Request, State};
use axum::http::{header, HeaderValue, Method, StatusCode};
use axum::middleware::{self, Next};
use axum::response::{IntoResponse, Response};
use axum::routing::get;
use axum::{Json, Router};
use percent_encoding::percent_decode_str;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use tokio::sync::Semaphore;

use crate::compare::{diff_view, CompareError, CompareRun};
use crate::io::{load_store, FormatError};
use crate::model::{EntityId, Namespaces, Term, Triple, BFS_LAYER, BFS_PARENT, INSTANCE_OF};
use crate::query::{evaluate, parse_query, EvalOptions, QueryError};
use crate::store::TripleStore;

/// Query texts longer than this are rejected with 413.
pub const MAX_QUERY_BYTES: usize = 64 * 1024;
/// Extra wall-clock allowance on top of the query timeout.
pub const TIMEOUT_GRACE: Duration = Duration::from_secs(1);
const SUGGESTIONS: usize = 5;
const DEFAULT_PAGE: usize = 10;

#[derive(Debug, thiserror::Error)]
pub enum ServiceError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Store(#[from] FormatError),
    #[error("compare run {path}: {source}")]
    Compare {
        path: String,
        #[source]
        source: CompareError,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ServiceConfig {
    pub bind: String,
    /// Turtle (`.ttl`) or JSON-lines triples.
    pub store: PathBuf,
    pub query_timeout_secs: u64,
    /// Upper bound on `limit` for paged endpoints.
    pub max_page: usize,
    /// Queries evaluated at once; further queries wait for a slot.
    pub query_workers: usize,
    pub compare_runs: Vec<PathBuf>,
    /// JSON-lines request log; stderr when unset.
    pub request_log: Option<PathBuf>,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        ServiceConfig {
            bind: "127.0.0.1:8080".into(),
            store: PathBuf::from("kb.ttl"),
            query_timeout_secs: 100,
            max_page: 100,
            query_workers: 4,
            compare_runs: Vec::new(),
            request_log: None,
        }
    }
}

impl ServiceConfig {
    pub fn from_toml(text: &str) -> Result<Self, ServiceError> {
        toml::from_str(text).map_err(|e| ServiceError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, ServiceError> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    /// Applies `KBFORGE_BIND`, `KBFORGE_STORE`, `KBFORGE_QUERY_TIMEOUT`,
    /// `KBFORGE_MAX_PAGE`, `KBFORGE_QUERY_WORKERS`, `KBFORGE_COMPARE_RUNS`
    /// (comma separated) and `KBFORGE_REQUEST_LOG`.
    pub fn apply_env(&mut self, var: impl Fn(&str) -> Option<String>) -> Result<(), ServiceError> {
        fn num<T: std::str::FromStr>(name: &str, v: &str) -> Result<T, ServiceError> {
            v.trim()
                .parse()
                .map_err(|_| ServiceError::Config(format!("{name}: not a number: {v}")))
        }
        if let Some(v) = var("KBFORGE_BIND") {
            self.bind = v;
        }
        if let Some(v) = var("KBFORGE_STORE") {
            self.store = v.into();
        }
        if let Some(v) = var("KBFORGE_QUERY_TIMEOUT") {
            self.query_timeout_secs = num("KBFORGE_QUERY_TIMEOUT", &v)?;
        }
        if let Some(v) = var("KBFORGE_MAX_PAGE") {
            self.max_page = num("KBFORGE_MAX_PAGE", &v)?;
        }
        if let Some(v) = var("KBFORGE_QUERY_WORKERS") {
            self.query_workers = num("KBFORGE_QUERY_WORKERS", &v)?;
        }
        if let Some(v) = var("KBFORGE_COMPARE_RUNS") {
            self.compare_runs = v.split(',').filter(|s| !s.trim().is_empty()).map(|s| s.trim().into()).collect();
        }
        if let Some(v) = var("KBFORGE_REQUEST_LOG") {
            self.request_log = Some(v.into());
        }
        self.validate()
    }

    pub fn validate(&self) -> Result<(), ServiceError> {
        if self.query_timeout_secs == 0 {
            return Err(ServiceError::Config("query timeout must be positive".into()));
        }
        if self.max_page == 0 || self.query_workers == 0 {
            return Err(ServiceError::Config("max_page and query_workers must be positive".into()));
        }
        Ok(())
    }

    pub fn timeout(&self) -> Duration {
        Duration::from_secs(self.query_timeout_secs)
    }
}

type LogSink = Arc<Mutex<Box<dyn Write + Send>>>;

/// Shared, immutable service state.
#[derive(Clone)]
pub struct AppState {
    store: Arc<TripleStore>,
    ns: Namespaces,
    timeout: Duration,
    max_page: usize,
    runs: Arc<BTreeMap<String, CompareRun>>,
    permits: Arc<Semaphore>,
    log: Option<LogSink>,
}

impl AppState {
    pub fn new(store: TripleStore) -> Self {
        AppState {
            store: Arc::new(store),
            ns: Namespaces::default(),
            timeout: crate::query::DEFAULT_TIMEOUT,
            max_page: 100,
            runs: Arc::new(BTreeMap::new()),
            permits: Arc::new(Semaphore::new(4)),
            log: None,
        }
    }

    pub fn with_timeout(mut self, timeout: Duration) -> Self {
        self.timeout = timeout;
        self
    }

    pub fn with_max_page(mut self, max_page: usize) -> Self {
        self.max_page = max_page.max(1);
        self
    }

    pub fn with_query_workers(mut self, n: usize) -> Self {
        self.permits = Arc::new(Semaphore::new(n.max(1)));
        self
    }

    pub fn with_run(mut self, name: &str, run: CompareRun) -> Self {
        Arc::make_mut(&mut self.runs).insert(name.to_string(), run);
        self
    }

    pub fn with_request_log(mut self, sink: Box<dyn Write + Send>) -> Self {
        self.log = Some(Arc::new(Mutex::new(sink)));
        self
    }

    /// Loads the store and compare runs named in `config`. Runs are keyed
    /// by file stem.
    pub fn from_config(config: &ServiceConfig) -> Result<Self, ServiceError> {
        config.validate()?;
        let store = load_store(&config.store, &Namespaces::default())?;
        let mut state = AppState::new(store)
            .with_timeout(config.timeout())
            .with_max_page(config.max_page)
            .with_query_workers(config.query_workers);
        for path in &config.compare_runs {
            let run = CompareRun::read(path).map_err(|source| ServiceError::Compare {
                path: path.display().to_string(),
                source,
            })?;
            let name = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
            state = state.with_run(&name, run);
        }
        let sink: Box<dyn Write + Send> = match &config.request_log {
            Some(p) => Box::new(std::fs::OpenOptions::new().create(true).append(true).open(p)?),
            None => Box::new(std::io::stderr()),
        };
        Ok(state.with_request_log(sink))
    }
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/entity/{local}", get(entity))
        .route("/search", get(search))
        .route("/query", get(query_get).post(query_post))
        .route("/compare/runs", get(compare_runs))
        .route("/compare/{run}/{a}/{b}/{entity}", get(compare_view))
        .layer(middleware::from_fn_with_state(state.clone(), request_layer))
        .with_state(state)
}

/// Serves until Ctrl-C; in-flight requests are allowed to finish.
pub async fn serve(config: ServiceConfig) -> Result<(), ServiceError> {
    let state = AppState::from_config(&config)?;
    let listener = tokio::net::TcpListener::bind(&config.bind).await?;
    tracing::info!(bind = %config.bind, triples = state.store.len(), "serving");
    axum::serve(listener, router(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
    Ok(())
}

async fn request_layer(State(state): State<AppState>, req: Request, next: Next) -> Response {
    let start = Instant::now();
    let method = req.method().clone();
    let path = req.uri().path().to_string();
    let mut resp = next.run(req).await;
    let cacheable = method == Method::GET && resp.status() == StatusCode::OK && !path.starts_with("/query");
    let policy = if cacheable { "public, max-age=300" } else { "no-store" };
    resp.headers_mut()
        .insert(header::CACHE_CONTROL, HeaderValue::from_static(policy));
    if let Some(log) = &state.log {
        let ts = SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_millis() as u64);
        let line = json!({
            "ts_ms": ts,
            "method": method.as_str(),
            "path": path,
            "status": resp.status().as_u16(),
            "elapsed_ms": start.elapsed().as_millis() as u64,
        });
        if let Ok(mut w) = log.lock() {
            let _ = writeln!(w, "{line}");
        }
    }
    resp
}

fn error(status: StatusCode, kind: &str, message: impl Into<String>) -> Response {
    (status, Json(json!({"error": kind, "message": message.into()}))).into_response()
}

fn raw_param<'a>(params: &'a RawPathParams, name: &str) -> &'a str {
    params.iter().find(|(k, _)| *k == name).map_or("", |(_, v)| v)
}

fn entity_ref(e: &EntityId) -> Value {
    json!({"label": e.label(), "iri_local": e.iri_local()})
}

fn suggestions(store: &TripleStore, text: &str) -> Vec<Value> {
    let mut hits = store.search_entities(text, SUGGESTIONS).results;
    // Fall back to ever shorter prefixes of the longest word, so a
    // misspelt ending still finds its neighbours.
    if let Some(word) = text.split_whitespace().max_by_key(|w| w.chars().count()) {
        let chars: Vec<char> = word.chars().collect();
        let mut n = chars.len();
        while hits.is_empty() && n >= 3 {
            hits = store.search_entities(&chars[..n].iter().collect::<String>(), SUGGESTIONS).results;
            n -= 1;
        }
    }
    hits.iter().map(entity_ref).collect()
}

fn statement(t: &Triple) -> Value {
    let mut v = json!({"p": t.predicate, "o": t.object.text(), "o_kind": t.object.kind()});
    if let Term::Entity(e) = &t.object {
        v["o_iri_local"] = Value::String(e.iri_local());
    }
    v
}

fn meta_rank(p: &str) -> u8 {
    match p {
        BFS_LAYER => 1,
        BFS_PARENT => 2,
        _ => 0,
    }
}

/// Entity document. Statements are ordered by predicate and object with
/// meta-relations last; `incoming_count` counts non-meta triples pointing
/// at the entity.
pub fn entity_document(store: &TripleStore, e: &EntityId) -> Option<Value> {
    let id = store.entity_id(e)?;
    let mut ts = store.triples_of(e);
    ts.sort_by(|a, b| {
        (meta_rank(&a.predicate), &a.predicate, &a.object).cmp(&(meta_rank(&b.predicate), &b.predicate, &b.object))
    });
    let incoming = store
        .scan(None, None, Some(id))
        .filter(|[_, p, _]| !crate::model::is_meta_predicate(store.node(*p).1))
        .count();
    let mut doc = json!({
        "label": e.label(),
        "iri_local": e.iri_local(),
        "statements": ts.iter().map(statement).collect::<Vec<_>>(),
        "incoming_count": incoming,
    });
    if let Some(l) = ts.iter().find(|t| t.predicate == BFS_LAYER) {
        doc["bfsLayer"] = Value::String(l.object.text().to_string());
    }
    let parents: Vec<Value> = ts
        .iter()
        .filter(|t| t.predicate == BFS_PARENT)
        .filter_map(|t| t.object.as_entity().map(entity_ref))
        .collect();
    if !parents.is_empty() {
        doc["bfsParents"] = Value::Array(parents);
    }
    Some(doc)
}

async fn entity(State(state): State<AppState>, params: RawPathParams) -> Response {
    let local = raw_param(&params, "local");
    let Ok(e) = EntityId::from_iri_local(local) else {
        return error(StatusCode::BAD_REQUEST, "bad_request", format!("malformed entity name: {local}"));
    };
    match entity_document(&state.store, &e) {
        Some(doc) => Json(doc).into_response(),
        None => (
            StatusCode::NOT_FOUND,
            Json(json!({
                "error": "not_found",
                "message": format!("no entity named {}", e.label()),
                "label": e.label(),
                "suggestions": suggestions(&state.store, e.label()),
            })),
        )
            .into_response(),
    }
}

#[derive(Debug, Deserialize)]
struct SearchParams {
    #[serde(default)]
    q: String,
    limit: Option<usize>,
}

/// First `instanceOf` object, used as a short description in listings.
fn snippet_class(store: &TripleStore, e: &EntityId) -> Option<String> {
    let mut classes: Vec<String> = store
        .triples_of(e)
        .into_iter()
        .filter(|t| t.predicate == INSTANCE_OF)
        .map(|t| t.object.text().to_string())
        .collect();
    classes.sort();
    classes.into_iter().next()
}

async fn search(State(state): State<AppState>, Query(params): Query<SearchParams>) -> Response {
    if params.q.trim().is_empty() {
        return error(StatusCode::BAD_REQUEST, "bad_request", "q must not be empty");
    }
    let limit = params.limit.unwrap_or(DEFAULT_PAGE).min(state.max_page);
    let found = state.store.search_entities(&params.q, limit);
    let results: Vec<Value> = found
        .results
        .iter()
        .map(|e| {
            let mut v = entity_ref(e);
            if let Some(c) = snippet_class(&state.store, e) {
                v["snippet_class"] = Value::String(c);
            }
            v
        })
        .collect();
    Json(json!({"total": found.total, "results": results})).into_response()
}

#[derive(Debug, Deserialize)]
struct QueryParams {
    #[serde(default)]
    query: String,
}

async fn query_get(State(state): State<AppState>, Query(params): Query<QueryParams>) -> Response {
    run_query(state, params.query).await
}

async fn query_post(State(state): State<AppState>, body: String) -> Response {
    run_query(state, body).await
}

fn query_error(e: &QueryError, elapsed_ms: u64, timeout: Duration) -> Response {
    let (status, body) = match e {
        QueryError::Syntax { line, column, .. } => (
            StatusCode::BAD_REQUEST,
            json!({"error": "syntax", "line": line, "column": column}),
        ),
        QueryError::Unsupported { line, column, .. } => (
            StatusCode::BAD_REQUEST,
            json!({"error": "unsupported", "line": line, "column": column}),
        ),
        QueryError::TypeError(_) => (StatusCode::BAD_REQUEST, json!({"error": "type_error"})),
        QueryError::Timeout => (
            StatusCode::REQUEST_TIMEOUT,
            json!({"error": "timeout", "timeout_ms": timeout.as_millis() as u64}),
        ),
        QueryError::ResourceExhausted { .. } => (StatusCode::REQUEST_TIMEOUT, json!({"error": "resource_exhausted"})),
    };
    let mut body = body;
    body["message"] = Value::String(e.to_string());
    body["elapsed_ms"] = json!(elapsed_ms);
    (status, Json(body)).into_response()
}

async fn run_query(state: AppState, text: String) -> Response {
    let start = Instant::now();
    if text.len() > MAX_QUERY_BYTES {
        return error(
            StatusCode::PAYLOAD_TOO_LARGE,
            "too_large",
            format!("query text exceeds {MAX_QUERY_BYTES} bytes"),
        );
    }
    if text.trim().is_empty() {
        return error(StatusCode::BAD_REQUEST, "bad_request", "empty query");
    }
    let plan = match parse_query(&text) {
        Ok(p) => p,
        Err(e) => return query_error(&e, start.elapsed().as_millis() as u64, state.timeout),
    };
    let timeout = state.timeout;
    let guard = timeout + TIMEOUT_GRACE;
    let work = async {
        let permit = state.permits.clone().acquire_owned().await.expect("semaphore is never closed");
        // Time spent waiting for a slot counts against the deadline.
        let remaining = timeout.saturating_sub(start.elapsed()).max(Duration::from_millis(1));
        let opts = EvalOptions::default().with_timeout(remaining);
        let store = state.store.clone();
        let result = tokio::task::spawn_blocking(move || {
            let _permit = permit;
            evaluate(&plan, &store, &opts)
        })
        .await;
        result.unwrap_or(Err(QueryError::Timeout))
    };
    let outcome = tokio::time::timeout(guard, work).await.unwrap_or(Err(QueryError::Timeout));
    let elapsed_ms = start.elapsed().as_millis() as u64;
    match outcome {
        Ok(table) => {
            let mut body = table.to_sparql_json(&state.ns);
            body["elapsed_ms"] = json!(elapsed_ms);
            body["rows"] = json!(table.len());
            let mut resp = Json(body).into_response();
            resp.headers_mut().insert(
                header::CONTENT_TYPE,
                HeaderValue::from_static("application/sparql-results+json"),
            );
            resp
        }
        Err(e) => query_error(&e, elapsed_ms, timeout),
    }
}

async fn compare_runs(State(state): State<AppState>) -> Response {
    let runs: Vec<Value> = state
        .runs
        .iter()
        .map(|(name, r)| {
            json!({
                "name": name,
                "models": r.models,
                "entities": r.entities.iter().map(entity_ref).collect::<Vec<_>>(),
                "totals": r.totals,
            })
        })
        .collect();
    Json(json!({"runs": runs})).into_response()
}

fn decoded(raw: &str) -> String {
    percent_decode_str(raw).decode_utf8_lossy().into_owned()
}

async fn compare_view(State(state): State<AppState>, params: RawPathParams) -> Response {
    let run_name = decoded(raw_param(&params, "run"));
    let (a, b) = (decoded(raw_param(&params, "a")), decoded(raw_param(&params, "b")));
    let Some(run) = state.runs.get(&run_name) else {
        return error(StatusCode::NOT_FOUND, "not_found", format!("unknown run {run_name}"));
    };
    let Ok(entity) = EntityId::from_iri_local(raw_param(&params, "entity")) else {
        return error(StatusCode::NOT_FOUND, "not_found", "malformed entity name");
    };
    match diff_view(run, &a, &b, &entity) {
        Ok(view) => {
            let mut body = serde_json::to_value(&view).expect("view serializes");
            body["run"] = Value::String(run_name);
            body["run_totals"] = json!({"a": run.totals.get(&a), "b": run.totals.get(&b)});
            Json(body).into_response()
        }
        Err(e) => error(StatusCode::NOT_FOUND, "not_found", e.to_string()),
    }
}

/// Builds an empty-bodied request; handy for tests and examples that drive
/// the router in-process.
pub fn get_request(uri: &str) -> Request {
    Request::builder().uri(uri).body(Body::empty()).expect("valid request")
}
