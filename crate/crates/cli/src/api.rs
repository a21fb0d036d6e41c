//! JSON API under `/api`.
//!
//! Store mutations go through one mutex. Model runs are prepared under the
//! lock, answered on a bounded pool of blocking workers, then recorded under
//! the lock again; until then `GET /api/runs/{id}` reports them as pending.

use std::collections::HashMap;
use std::path::PathBuf;
use std::sync::{Arc, Mutex, MutexGuard};

use axum::body::Bytes;
use axum::extract::{Path, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::de::DeserializeOwned;
use serde::Deserialize;
use serde_json::{json, Value};
use themeloom_core::cards::Category;
use themeloom_core::matrix::Cell;
use themeloom_core::{Codebook, Coding, Deck, Dims, Exec, PromptSpec, Threshold};
use themeloom_gateway::{Gateway, GatewayError, ResponseCache};
use themeloom_workbench::workflow::{self, PreparedRun, RunOptions, WorkflowError};
use themeloom_workbench::{Project, RunStatus};
use tokio::sync::Semaphore;

use crate::error::ApiError;
use crate::provider::ProviderArgs;

type ApiResult<T> = Result<T, ApiError>;

#[derive(Debug, Clone)]
enum Pending {
    Running,
    Failed(String),
}

pub struct AppState {
    project: Mutex<Project>,
    pending: Mutex<HashMap<String, Pending>>,
    cache: Arc<ResponseCache>,
    workers: Arc<Semaphore>,
    deck: Deck,
}

impl AppState {
    pub fn new(project: Project, deck: Deck, workers: usize) -> Result<Arc<Self>, WorkflowError> {
        let cache = ResponseCache::open(project.cache_dir())
            .map_err(|source| WorkflowError::Gateway { run_id: None, source })?;
        Ok(Arc::new(Self {
            project: Mutex::new(project),
            pending: Mutex::new(HashMap::new()),
            cache: Arc::new(cache),
            workers: Arc::new(Semaphore::new(workers)),
            deck,
        }))
    }

    fn project(&self) -> MutexGuard<'_, Project> {
        self.project.lock().unwrap_or_else(|p| p.into_inner())
    }

    fn pending(&self) -> MutexGuard<'_, HashMap<String, Pending>> {
        self.pending.lock().unwrap_or_else(|p| p.into_inner())
    }
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/api/corpus", get(get_corpus))
        .route("/api/codebooks", get(list_codebooks).post(post_codebook))
        .route("/api/codebooks/{version}/approve", post(approve_codebook))
        .route("/api/runs", get(list_runs).post(post_run))
        .route("/api/runs/{id}", get(get_run))
        .route("/api/runs/{id}/revise", post(post_revision))
        .route("/api/human-codings", post(post_human_coding))
        .route("/api/agreement", get(get_agreement))
        .route("/api/sweep", get(get_sweep))
        .route("/api/consensus", get(list_sessions).post(post_session))
        .route("/api/consensus/{id}", get(get_session))
        .route("/api/consensus/{id}/resolve", post(resolve))
        .route("/api/cards/draw", get(draw_card))
        .route("/api/reflections", get(list_reflections).post(post_reflection))
        .route("/api/export", get(export))
        .fallback(|| async { ApiError::not_found("no such endpoint") })
        .with_state(state)
}

/// Serves until the process ends. Requests outside `/api` are answered
/// from `static_dir` when one is given.
pub fn serve_blocking(listener: std::net::TcpListener, state: Arc<AppState>, static_dir: Option<PathBuf>) -> std::io::Result<()> {
    listener.set_nonblocking(true)?;
    let runtime = tokio::runtime::Builder::new_multi_thread().enable_all().build()?;
    runtime.block_on(async move {
        let listener = tokio::net::TcpListener::from_std(listener)?;
        let mut app = router(state);
        if let Some(dir) = static_dir {
            app = app.fallback_service(tower_http::services::ServeDir::new(dir));
        }
        axum::serve(listener, app).await
    })
}

fn body<T: DeserializeOwned>(bytes: &Bytes) -> ApiResult<T> {
    serde_json::from_slice(bytes).map_err(|e| ApiError::bad_request(format!("invalid request body: {e}")))
}

fn param<'a>(q: &'a HashMap<String, String>, name: &str) -> ApiResult<&'a str> {
    q.get(name).map(String::as_str).ok_or_else(|| ApiError::bad_request(format!("missing query parameter `{name}`")))
}

fn int_param(q: &HashMap<String, String>, name: &str, default: Option<i64>) -> ApiResult<i64> {
    match (q.get(name), default) {
        (Some(v), _) => v.trim().parse().map_err(|_| ApiError::bad_request(format!("`{name}` must be an integer, got {v:?}"))),
        (None, Some(d)) => Ok(d),
        (None, None) => Err(ApiError::bad_request(format!("missing query parameter `{name}`"))),
    }
}

fn threshold(v: i64) -> ApiResult<Threshold> {
    Threshold::new(v).map_err(|e| ApiError::bad_request(e.to_string()))
}

/// Pre-rendered JSON text, so the API and the CLI emit identical bytes.
fn raw_json(status: StatusCode, text: String) -> Response {
    (status, [(header::CONTENT_TYPE, "application/json")], text).into_response()
}

// ---- corpus and codebooks ----

async fn get_corpus(State(st): State<Arc<AppState>>) -> ApiResult<Json<Value>> {
    let p = st.project();
    let corpus = p.corpus()?;
    Ok(Json(json!({ "label": corpus.label(), "statements": corpus.statements() })))
}

async fn list_codebooks(State(st): State<Arc<AppState>>) -> ApiResult<Json<Value>> {
    let p = st.project();
    Ok(Json(json!({
        "active": p.active_version(),
        "codebooks": p.codebooks().collect::<Vec<_>>(),
        "approvals": p.approvals(),
    })))
}

#[derive(Deserialize)]
struct GenerateRequest {
    #[serde(flatten)]
    provider: ProviderArgs,
    #[serde(default)]
    guidance: String,
}

/// Either `{"generate": {provider.., guidance}}` or a codebook document.
async fn post_codebook(State(st): State<Arc<AppState>>, bytes: Bytes) -> ApiResult<(StatusCode, Json<Value>)> {
    let doc: Value = body(&bytes)?;
    if let Some(gen) = doc.get("generate") {
        let req: GenerateRequest =
            serde_json::from_value(gen.clone()).map_err(|e| ApiError::bad_request(format!("invalid generate request: {e}")))?;
        let config = req.provider.to_config().map_err(ApiError::bad_request)?;
        let gateway = Gateway::new(config).map_err(provider_err)?.with_cache(st.cache.clone());
        let version = tokio::task::spawn_blocking(move || {
            let mut p = st.project();
            workflow::generate_codebook(&mut p, &gateway, &req.guidance).map(|v| (v, p.codebook(v).cloned()))
        })
        .await
        .expect("generation task");
        let (v, cb) = version?;
        return Ok((StatusCode::CREATED, Json(json!({ "version": v, "codebook": cb? }))));
    }
    let mut cb = Codebook::from_json(&doc.to_string()).map_err(|e| ApiError::bad_request(e.to_string()))?;
    let mut p = st.project();
    let floor = p.latest_version().unwrap_or(0) + 1;
    if cb.version() < floor {
        cb.bump_to(floor).map_err(|e| ApiError::bad_request(e.to_string()))?;
    }
    let v = p.add_codebook(cb)?;
    Ok((StatusCode::CREATED, Json(json!({ "version": v, "codebook": p.codebook(v)? }))))
}

async fn approve_codebook(State(st): State<Arc<AppState>>, Path(version): Path<String>) -> ApiResult<Json<Value>> {
    let version: u64 = version.parse().map_err(|_| ApiError::bad_request(format!("bad codebook version {version:?}")))?;
    let mut p = st.project();
    let v = p.approve_codebook(version)?;
    Ok(Json(json!({ "draft_version": version, "approved_version": v, "codebook": p.codebook(v)? })))
}

// ---- runs ----

fn matrix_json(m: &Coding) -> Value {
    match m {
        Coding::Scores(s) => json!({
            "kind": "scores",
            "dims": s.dims(),
            "values": s.rows().collect::<Vec<_>>(),
        }),
        Coding::Binary(b) => json!({
            "kind": "binary",
            "dims": b.dims(),
            "values": b.bits().chunks(b.dims().themes).map(|r| r.iter().map(|&x| x as u8).collect::<Vec<_>>()).collect::<Vec<_>>(),
        }),
    }
}

fn run_view(p: &Project, id: &str, with_matrix: bool) -> ApiResult<Value> {
    let run = p.run(id)?;
    let mut v = serde_json::to_value(workflow::export_run(p, id)?).expect("run export serializes");
    match &run.status {
        RunStatus::Complete => v["status"] = "complete".into(),
        RunStatus::Failed { error } => {
            v["status"] = "failed".into();
            v["error"] = error.clone().into();
        }
    }
    if with_matrix {
        if let Some(m) = &run.matrix {
            v["matrix"] = matrix_json(m);
        }
    }
    Ok(v)
}

async fn list_runs(State(st): State<Arc<AppState>>) -> ApiResult<Json<Value>> {
    let p = st.project();
    let mut runs = p.runs().iter().map(|r| run_view(&p, &r.run_id, false)).collect::<ApiResult<Vec<_>>>()?;
    let pending = st.pending();
    let mut waiting: Vec<_> = pending.iter().collect();
    waiting.sort_by(|a, b| a.0.cmp(b.0));
    for (id, state) in waiting {
        runs.push(pending_view(id, state));
    }
    Ok(Json(json!({ "runs": runs })))
}

fn pending_view(id: &str, state: &Pending) -> Value {
    match state {
        Pending::Running => json!({ "run_id": id, "status": "pending" }),
        Pending::Failed(error) => json!({ "run_id": id, "status": "failed", "error": error }),
    }
}

async fn get_run(State(st): State<Arc<AppState>>, Path(id): Path<String>) -> ApiResult<Json<Value>> {
    // Lock order: project, then pending (the worker records under both).
    let p = st.project();
    if p.run(&id).is_ok() {
        return Ok(Json(run_view(&p, &id, true)?));
    }
    match st.pending().get(&id) {
        Some(state) => Ok(Json(pending_view(&id, state))),
        None => Err(ApiError::not_found(format!("run {id} not found"))),
    }
}

#[derive(Deserialize)]
struct RunRequest {
    #[serde(flatten)]
    provider: ProviderArgs,
    #[serde(default)]
    spec: Option<PromptSpec>,
    #[serde(default)]
    repair: bool,
}

fn provider_err(source: GatewayError) -> ApiError {
    WorkflowError::Gateway { run_id: None, source }.into()
}

async fn post_run(State(st): State<Arc<AppState>>, bytes: Bytes) -> ApiResult<(StatusCode, Json<Value>)> {
    let req: RunRequest = body(&bytes)?;
    let config = req.provider.to_config().map_err(ApiError::bad_request)?;
    let prepared = workflow::prepare_model_run(&st.project(), &config, &req.spec.unwrap_or_default(), RunOptions { repair: req.repair })?;
    start(st, prepared)
}

async fn post_revision(State(st): State<Arc<AppState>>, Path(id): Path<String>, bytes: Bytes) -> ApiResult<(StatusCode, Json<Value>)> {
    let req: RunRequest = if bytes.is_empty() { body(&Bytes::from_static(b"{}"))? } else { body(&bytes)? };
    let config = req.provider.to_config().map_err(ApiError::bad_request)?;
    let prepared = workflow::prepare_revision(&st.project(), &config, &id, req.spec.as_ref(), RunOptions { repair: req.repair })?;
    start(st, prepared)
}

fn start(st: Arc<AppState>, prepared: PreparedRun) -> ApiResult<(StatusCode, Json<Value>)> {
    let gateway = Gateway::new(prepared.config.clone()).map_err(provider_err)?.with_cache(st.cache.clone());
    let id = prepared.run_id.clone();
    st.pending().insert(id.clone(), Pending::Running);
    let worker = st.clone();
    let run_id = id.clone();
    tokio::spawn(async move {
        let permit = worker.workers.clone().acquire_owned().await.expect("worker pool is never closed");
        let job = worker.clone();
        let _ = tokio::task::spawn_blocking(move || {
            let response = gateway.complete(&prepared.prompt);
            let mut p = job.project();
            let outcome = workflow::finish(&mut p, prepared, response);
            let mut pending = job.pending();
            match outcome {
                Err(e) if e.failed_run().is_none() => {
                    pending.insert(run_id, Pending::Failed(e.to_string()));
                }
                _ => {
                    pending.remove(&run_id);
                }
            }
            drop(permit);
        })
        .await;
    });
    Ok((StatusCode::CREATED, Json(json!({ "run_id": id, "status": "pending" }))))
}

// ---- human codings and analysis ----

#[derive(Deserialize)]
struct HumanCoding {
    name: String,
    #[serde(default)]
    values: Option<Vec<Vec<i64>>>,
    #[serde(default)]
    csv: Option<String>,
}

async fn post_human_coding(State(st): State<Arc<AppState>>, bytes: Bytes) -> ApiResult<(StatusCode, Json<Value>)> {
    let req: HumanCoding = body(&bytes)?;
    let mut p = st.project();
    let id = match (req.values, req.csv) {
        (Some(rows), None) => {
            let themes = rows.first().map_or(0, Vec::len);
            if rows.iter().any(|r| r.len() != themes) {
                return Err(ApiError::bad_request("rows of `values` have different lengths"));
            }
            let flat: Vec<i64> = rows.concat();
            workflow::record_human_values(&mut p, &req.name, Dims::new(rows.len(), themes), &flat)?
        }
        (None, Some(csv)) => workflow::import_human_csv(&mut p, &req.name, &csv)?,
        _ => return Err(ApiError::bad_request("give exactly one of `values` or `csv`")),
    };
    Ok((StatusCode::CREATED, Json(json!({ "run_id": id }))))
}

async fn get_agreement(State(st): State<Arc<AppState>>, Query(q): Query<HashMap<String, String>>) -> ApiResult<Response> {
    let (a, b) = (param(&q, "a")?, param(&q, "b")?);
    let tau = threshold(int_param(&q, "tau", None)?)?;
    let report = workflow::agreement(&st.project(), a, b, tau)?;
    Ok(raw_json(StatusCode::OK, report.to_json()))
}

async fn get_sweep(State(st): State<Arc<AppState>>, Query(q): Query<HashMap<String, String>>) -> ApiResult<Json<Value>> {
    let (run, reference) = (param(&q, "run")?, param(&q, "ref")?);
    let from = threshold(int_param(&q, "from", Some(0))?)?;
    let to = threshold(int_param(&q, "to", Some(100))?)?;
    let step = int_param(&q, "step", Some(1))?;
    let step = u8::try_from(step).map_err(|_| ApiError::bad_request(format!("step {step} is outside [1, 100]")))?;
    let grid = workflow::threshold_grid(from, to, step)?;
    let points = workflow::sweep(&st.project(), run, reference, &grid, Exec::Parallel)?;
    Ok(Json(json!({ "run": run, "ref": reference, "points": points })))
}

// ---- consensus ----

async fn list_sessions(State(st): State<Arc<AppState>>) -> ApiResult<Json<Value>> {
    let p = st.project();
    Ok(Json(json!({ "sessions": p.sessions().collect::<Vec<_>>() })))
}

async fn get_session(State(st): State<Arc<AppState>>, Path(id): Path<String>) -> ApiResult<Json<Value>> {
    let p = st.project();
    Ok(Json(serde_json::to_value(p.session(&id)?).expect("session serializes")))
}

#[derive(Deserialize)]
struct OpenSession {
    runs: Vec<String>,
}

async fn post_session(State(st): State<Arc<AppState>>, bytes: Bytes) -> ApiResult<(StatusCode, Json<Value>)> {
    let req: OpenSession = body(&bytes)?;
    let session = workflow::open_consensus(&mut st.project(), &req.runs)?;
    Ok((StatusCode::CREATED, Json(serde_json::to_value(session).expect("session serializes"))))
}

#[derive(Deserialize)]
struct ResolveRequest {
    statement: u32,
    theme: u32,
    value: u8,
    #[serde(default)]
    rationale: String,
}

async fn resolve(State(st): State<Arc<AppState>>, Path(id): Path<String>, bytes: Bytes) -> ApiResult<Json<Value>> {
    let req: ResolveRequest = body(&bytes)?;
    let value = match req.value {
        0 => false,
        1 => true,
        v => return Err(ApiError::bad_request(format!("`value` must be 0 or 1, got {v}"))),
    };
    let session = workflow::resolve_cell(&mut st.project(), &id, Cell::new(req.statement, req.theme), value, &req.rationale)?;
    Ok(Json(serde_json::to_value(session).expect("session serializes")))
}

// ---- cards and reflections ----

async fn draw_card(State(st): State<Arc<AppState>>, Query(q): Query<HashMap<String, String>>) -> ApiResult<Json<Value>> {
    let seed = param(&q, "seed")?;
    let seed: u64 = seed.trim().parse().map_err(|_| ApiError::bad_request(format!("`seed` must be a non-negative integer, got {seed:?}")))?;
    let category = match q.get("category") {
        Some(c) => Some(Category::parse(c).ok_or_else(|| ApiError::bad_request(format!("unknown category {c:?}")))?),
        None => None,
    };
    let card = st.deck.draw(seed, category).map_err(|e| ApiError::bad_request(e.to_string()))?;
    Ok(Json(json!({ "seed": seed, "card": card })))
}

#[derive(Deserialize)]
struct ReflectionRequest {
    card_id: u32,
    prompt_hash: String,
    note: String,
}

async fn post_reflection(State(st): State<Arc<AppState>>, bytes: Bytes) -> ApiResult<(StatusCode, Json<Value>)> {
    let req: ReflectionRequest = body(&bytes)?;
    let r = workflow::attach_reflection(&mut st.project(), &st.deck, req.card_id, &req.prompt_hash, &req.note)?;
    Ok((StatusCode::CREATED, Json(serde_json::to_value(r).expect("reflection serializes"))))
}

async fn list_reflections(State(st): State<Arc<AppState>>, Query(q): Query<HashMap<String, String>>) -> ApiResult<Json<Value>> {
    let p = st.project();
    let list: Vec<_> = match q.get("prompt_hash") {
        Some(h) => p.reflections_for(h),
        None => p.reflections().iter().collect(),
    };
    Ok(Json(json!({ "reflections": list })))
}

async fn export(State(st): State<Arc<AppState>>) -> ApiResult<Json<Value>> {
    let p = st.project();
    Ok(Json(serde_json::to_value(workflow::export_project(&p)?).expect("export serializes")))
}
