//! HTTP API over datasets, pipeline runs and counterfactual experiments.
//!
//! Layout under the data root:
//! `datasets/<id>/{dataset.json,manifest.csv}`, `runs/<run-id>/`,
//! `experiments/<experiment-id>/`. Jobs live in memory only; completed
//! results are always read back from disk.

use std::collections::{BTreeMap, HashMap};
use std::path::{Path, PathBuf};
use std::sync::{Arc, RwLock};

use axum::body::{Body, Bytes};
use axum::extract::{Path as UrlPath, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use tokio::sync::{mpsc, Mutex};

use gebi_core::counterfactual::{execute_experiment, load_experiment, CounterfactualError, ExperimentRequest};
use gebi_core::data::{gatr, load_manifest, load_manifest_with_root, write_manifest, DatasetManifest, Label};
use gebi_core::pipeline::{execute_run, load_run, RunConfig, CLUSTERS_FILE, VIZ3D_FILE};
use gebi_core::store::{short_digest, write_atomic};

/// JSON error body `{"error": message, "stage": name}` with a status.
#[derive(Debug)]
pub struct ApiError {
    pub status: StatusCode,
    pub error: String,
    pub stage: String,
}

impl ApiError {
    fn new(status: StatusCode, stage: &str, error: impl ToString) -> Self {
        Self {
            status,
            error: error.to_string(),
            stage: stage.to_string(),
        }
    }

    fn bad_request(error: impl ToString) -> Self {
        Self::new(StatusCode::BAD_REQUEST, "request", error)
    }

    fn not_found(what: &str, id: &str) -> Self {
        Self::new(StatusCode::NOT_FOUND, "lookup", format!("{what} `{id}` not found"))
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = serde_json::json!({ "error": self.error, "stage": self.stage });
        (self.status, Json(body)).into_response()
    }
}

type ApiResult<T> = Result<T, ApiError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum JobKind {
    Run,
    Experiment,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum JobState {
    Queued,
    Running,
    Done,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Job {
    pub id: String,
    pub kind: JobKind,
    pub state: JobState,
    pub error: Option<String>,
    pub stage: Option<String>,
    /// `runs/<id>` or `experiments/<id>`, relative to the data root; set
    /// only when done.
    pub result_ref: Option<String>,
}

enum Work {
    Run(RunConfig),
    Experiment(ExperimentRequest),
}

struct Queued {
    id: String,
    work: Work,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetInfo {
    pub id: String,
    pub root: PathBuf,
    /// Normalized manifest with absolute paths.
    pub manifest: PathBuf,
    pub n_entries: usize,
    pub has_attributions: bool,
    pub label_counts: BTreeMap<Label, usize>,
}

struct Inner {
    data_root: PathBuf,
    jobs: RwLock<HashMap<String, Job>>,
    datasets: RwLock<HashMap<String, DatasetInfo>>,
    queue: mpsc::UnboundedSender<Queued>,
}

#[derive(Clone)]
pub struct AppState {
    inner: Arc<Inner>,
}

impl AppState {
    /// Opens `data_root`, reloads registered datasets and starts `workers`
    /// job workers on the current tokio runtime.
    pub fn open(data_root: &Path, workers: usize) -> std::io::Result<Self> {
        for sub in ["datasets", "runs", "experiments"] {
            std::fs::create_dir_all(data_root.join(sub))?;
        }
        let datasets = scan_datasets(&data_root.join("datasets"));
        log::info!(
            "data root {}: {} datasets, {} runs, {} experiments",
            data_root.display(),
            datasets.len(),
            completed(&data_root.join("runs"), CLUSTERS_FILE).len(),
            completed(&data_root.join("experiments"), "report.json").len()
        );
        let (tx, rx) = mpsc::unbounded_channel();
        let state = AppState {
            inner: Arc::new(Inner {
                data_root: data_root.to_path_buf(),
                jobs: RwLock::new(HashMap::new()),
                datasets: RwLock::new(datasets),
                queue: tx,
            }),
        };
        let rx = Arc::new(Mutex::new(rx));
        for _ in 0..workers.max(1) {
            tokio::spawn(worker(state.clone(), rx.clone()));
        }
        Ok(state)
    }

    pub fn data_root(&self) -> &Path {
        &self.inner.data_root
    }

    pub fn job(&self, id: &str) -> Option<Job> {
        self.inner.jobs.read().expect("job table").get(id).cloned()
    }

    fn update(&self, id: &str, f: impl FnOnce(&mut Job)) {
        if let Some(job) = self.inner.jobs.write().expect("job table").get_mut(id) {
            f(job);
        }
    }

    fn submit(&self, kind: JobKind, work: Work) -> Job {
        let job = Job {
            id: uuid::Uuid::new_v4().to_string(),
            kind,
            state: JobState::Queued,
            error: None,
            stage: None,
            result_ref: None,
        };
        self.inner
            .jobs
            .write()
            .expect("job table")
            .insert(job.id.clone(), job.clone());
        let queued = Queued {
            id: job.id.clone(),
            work,
        };
        if self.inner.queue.send(queued).is_err() {
            self.update(&job.id, |j| {
                j.state = JobState::Failed;
                j.error = Some("job queue is closed".into());
                j.stage = Some("queue".into());
            });
        }
        job
    }

    fn dataset(&self, id: &str) -> Option<DatasetInfo> {
        self.inner.datasets.read().expect("dataset table").get(id).cloned()
    }

    /// A registered dataset id maps to its normalized manifest; anything
    /// else is taken as a manifest path.
    fn resolve_manifest(&self, reference: &Path) -> PathBuf {
        reference
            .to_str()
            .and_then(|s| self.dataset(s))
            .map(|d| d.manifest)
            .unwrap_or_else(|| reference.to_path_buf())
    }
}

fn counterfactual_stage(e: &CounterfactualError) -> &'static str {
    match e {
        CounterfactualError::Data(_) => "load",
        CounterfactualError::Predict { .. } | CounterfactualError::Predictor(_) => "predict",
        CounterfactualError::Bias { .. } => "insert_bias",
        CounterfactualError::Io { .. } | CounterfactualError::Corrupt { .. } => "persist",
        CounterfactualError::InvalidThreshold(_) | CounterfactualError::Empty => "summarize",
    }
}

/// `Ok(result_ref)` or `Err((stage, message))`.
fn execute(root: &Path, work: Work) -> Result<String, (String, String)> {
    match work {
        Work::Run(cfg) => execute_run(&cfg, &root.join("runs"))
            .map(|r| format!("runs/{}", r.run_id))
            .map_err(|e| (e.stage.to_string(), e.source.to_string())),
        Work::Experiment(req) => execute_experiment(&req, &root.join("experiments"), 0)
            .map(|(id, _)| format!("experiments/{id}"))
            .map_err(|e| (counterfactual_stage(&e).to_string(), e.to_string())),
    }
}

async fn worker(state: AppState, rx: Arc<Mutex<mpsc::UnboundedReceiver<Queued>>>) {
    loop {
        let Some(job) = rx.lock().await.recv().await else {
            return;
        };
        state.update(&job.id, |j| j.state = JobState::Running);
        let root = state.data_root().to_path_buf();
        let outcome = tokio::task::spawn_blocking(move || execute(&root, job.work))
            .await
            .unwrap_or_else(|e| Err(("worker".into(), format!("job panicked: {e}"))));
        state.update(&job.id, |j| match outcome {
            Ok(r) => {
                j.state = JobState::Done;
                j.result_ref = Some(r);
            }
            Err((stage, error)) => {
                log::warn!("job {} failed at {stage}: {error}", j.id);
                j.state = JobState::Failed;
                j.stage = Some(stage);
                j.error = Some(error);
            }
        });
    }
}

fn scan_datasets(dir: &Path) -> HashMap<String, DatasetInfo> {
    let mut out = HashMap::new();
    let Ok(rd) = std::fs::read_dir(dir) else {
        return out;
    };
    for e in rd.flatten() {
        let p = e.path().join("dataset.json");
        match std::fs::read(&p).map(|b| serde_json::from_slice::<DatasetInfo>(&b)) {
            Ok(Ok(info)) => {
                out.insert(info.id.clone(), info);
            }
            _ => log::warn!("skipping unreadable dataset record {}", p.display()),
        }
    }
    out
}

/// Sorted ids of subdirectories of `dir` that contain `marker`.
fn completed(dir: &Path, marker: &str) -> Vec<String> {
    let mut ids: Vec<String> = std::fs::read_dir(dir)
        .into_iter()
        .flatten()
        .flatten()
        .filter(|e| e.path().join(marker).is_file())
        .map(|e| e.file_name().to_string_lossy().into_owned())
        .collect();
    ids.sort();
    ids
}

fn check_id(id: &str) -> ApiResult<()> {
    let ok = !id.is_empty() && id.chars().all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_');
    if ok {
        Ok(())
    } else {
        Err(ApiError::bad_request(format!("malformed id `{id}`")))
    }
}

fn parse_json<T: serde::de::DeserializeOwned>(body: &Bytes) -> ApiResult<T> {
    serde_json::from_slice(body).map_err(|e| ApiError::bad_request(format!("invalid request body: {e}")))
}

fn file_response(path: &Path, content_type: &'static str, what: &str, id: &str) -> ApiResult<Response> {
    let bytes = std::fs::read(path).map_err(|_| ApiError::not_found(what, id))?;
    Ok(([(header::CONTENT_TYPE, content_type)], Body::from(bytes)).into_response())
}

async fn health() -> Json<serde_json::Value> {
    Json(serde_json::json!({ "status": "ok" }))
}

#[derive(Deserialize)]
struct DatasetRequest {
    root: PathBuf,
    manifest: PathBuf,
}

async fn create_dataset(State(st): State<AppState>, body: Bytes) -> ApiResult<(StatusCode, Json<DatasetInfo>)> {
    let req: DatasetRequest = parse_json(&body)?;
    let load_err = |e: &dyn std::fmt::Display| ApiError::new(StatusCode::BAD_REQUEST, "load", e);
    let root = std::fs::canonicalize(&req.root).map_err(|e| load_err(&format!("{}: {e}", req.root.display())))?;
    let manifest_path = root.join(&req.manifest);
    let raw = std::fs::read(&manifest_path).map_err(|e| load_err(&format!("{}: {e}", manifest_path.display())))?;
    let manifest = load_manifest_with_root(&manifest_path, &root).map_err(|e| load_err(&e))?;

    let mut key = root.to_string_lossy().into_owned().into_bytes();
    key.push(0);
    key.extend_from_slice(&raw);
    let id = short_digest(&key);
    let dir = st.data_root().join("datasets").join(&id);
    std::fs::create_dir_all(&dir).map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "persist", e))?;
    let normalized = dir.join("manifest.csv");
    let absolute = DatasetManifest {
        root_dir: PathBuf::new(),
        entries: manifest.entries.clone(),
    };
    write_manifest(&absolute, &normalized).map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "persist", e))?;

    let mut label_counts = BTreeMap::new();
    for e in &manifest.entries {
        *label_counts.entry(e.label).or_insert(0) += 1;
    }
    let info = DatasetInfo {
        id: id.clone(),
        root,
        manifest: normalized,
        n_entries: manifest.len(),
        has_attributions: manifest.has_attributions(),
        label_counts,
    };
    let record = serde_json::to_vec_pretty(&info).expect("dataset info serializes");
    write_atomic(&dir.join("dataset.json"), &record)
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "persist", e))?;
    st.inner
        .datasets
        .write()
        .expect("dataset table")
        .insert(id, info.clone());
    Ok((StatusCode::CREATED, Json(info)))
}

#[derive(Serialize)]
struct EntryView {
    id: String,
    label: Label,
    has_attribution: bool,
}

#[derive(Serialize)]
struct DatasetView {
    #[serde(flatten)]
    info: DatasetInfo,
    entries: Vec<EntryView>,
}

fn registered_manifest(st: &AppState, id: &str) -> ApiResult<DatasetManifest> {
    check_id(id)?;
    let info = st.dataset(id).ok_or_else(|| ApiError::not_found("dataset", id))?;
    load_manifest(&info.manifest).map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "load", e))
}

async fn get_dataset(State(st): State<AppState>, UrlPath(id): UrlPath<String>) -> ApiResult<Json<DatasetView>> {
    let manifest = registered_manifest(&st, &id)?;
    let info = st.dataset(&id).expect("checked above");
    let entries = manifest
        .entries
        .iter()
        .map(|e| EntryView {
            id: e.id.clone(),
            label: e.label,
            has_attribution: e.attribution.is_some(),
        })
        .collect();
    Ok(Json(DatasetView { info, entries }))
}

async fn submit_run(State(st): State<AppState>, body: Bytes) -> ApiResult<(StatusCode, Json<Job>)> {
    let mut cfg: RunConfig = parse_json(&body)?;
    cfg.dataset = st.resolve_manifest(&cfg.dataset);
    Ok((StatusCode::ACCEPTED, Json(st.submit(JobKind::Run, Work::Run(cfg)))))
}

async fn submit_experiment(State(st): State<AppState>, body: Bytes) -> ApiResult<(StatusCode, Json<Job>)> {
    let mut req: ExperimentRequest = parse_json(&body)?;
    req.manifest = st.resolve_manifest(&req.manifest);
    Ok((StatusCode::ACCEPTED, Json(st.submit(JobKind::Experiment, Work::Experiment(req)))))
}

async fn get_job(State(st): State<AppState>, UrlPath(id): UrlPath<String>) -> ApiResult<Json<Job>> {
    st.job(&id).map(Json).ok_or_else(|| ApiError::not_found("job", &id))
}

async fn list_runs(State(st): State<AppState>) -> Json<Vec<String>> {
    Json(completed(&st.data_root().join("runs"), CLUSTERS_FILE))
}

async fn list_experiments(State(st): State<AppState>) -> Json<Vec<String>> {
    Json(completed(&st.data_root().join("experiments"), "report.json"))
}

fn run_dir(st: &AppState, id: &str) -> ApiResult<PathBuf> {
    check_id(id)?;
    let dir = st.data_root().join("runs").join(id);
    if !dir.join(CLUSTERS_FILE).is_file() {
        return Err(ApiError::not_found("run", id));
    }
    Ok(dir)
}

async fn get_run(State(st): State<AppState>, UrlPath(id): UrlPath<String>) -> ApiResult<Response> {
    let dir = run_dir(&st, &id)?;
    let run = load_run(&dir).map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, e.stage.as_str(), e.source))?;
    Ok(Json(run).into_response())
}

async fn get_viz3d(State(st): State<AppState>, UrlPath(id): UrlPath<String>) -> ApiResult<Response> {
    let dir = run_dir(&st, &id)?;
    file_response(&dir.join(VIZ3D_FILE), "text/csv", "run", &id)
}

fn experiment_dir(st: &AppState, id: &str) -> ApiResult<PathBuf> {
    check_id(id)?;
    let dir = st.data_root().join("experiments").join(id);
    if !dir.join("report.json").is_file() {
        return Err(ApiError::not_found("experiment", id));
    }
    Ok(dir)
}

async fn get_report(State(st): State<AppState>, UrlPath(id): UrlPath<String>) -> ApiResult<Response> {
    let dir = experiment_dir(&st, &id)?;
    file_response(&dir.join("report.json"), "application/json", "experiment", &id)
}

async fn get_deltas(State(st): State<AppState>, UrlPath(id): UrlPath<String>) -> ApiResult<Response> {
    let dir = experiment_dir(&st, &id)?;
    file_response(&dir.join("deltas.csv"), "text/csv", "experiment", &id)
}

async fn get_table(State(st): State<AppState>, UrlPath(id): UrlPath<String>) -> ApiResult<Response> {
    let dir = experiment_dir(&st, &id)?;
    let files = load_experiment(&dir).map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "load", e))?;
    Ok(([(header::CONTENT_TYPE, "text/plain; charset=utf-8")], files.table).into_response())
}

async fn get_image(
    State(st): State<AppState>,
    UrlPath((dataset, sample)): UrlPath<(String, String)>,
) -> ApiResult<Response> {
    let manifest = registered_manifest(&st, &dataset)?;
    let entry = manifest.get(&sample).ok_or_else(|| ApiError::not_found("sample", &sample))?;
    file_response(&entry.image, "image/png", "sample", &sample)
}

#[derive(Deserialize)]
struct AttributionQuery {
    format: Option<String>,
}

async fn get_attribution(
    State(st): State<AppState>,
    UrlPath((dataset, sample)): UrlPath<(String, String)>,
    Query(q): Query<AttributionQuery>,
) -> ApiResult<Response> {
    let manifest = registered_manifest(&st, &dataset)?;
    let entry = manifest.get(&sample).ok_or_else(|| ApiError::not_found("sample", &sample))?;
    let path = entry
        .attribution
        .as_ref()
        .ok_or_else(|| ApiError::not_found("attribution for sample", &sample))?;
    match q.format.as_deref() {
        Some("gatr") => file_response(path, "application/octet-stream", "attribution", &sample),
        None | Some("png") => {
            let internal = |e: &dyn std::fmt::Display| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "load", e);
            let grid = gatr::read_attribution_grid(path).map_err(|e| internal(&e))?;
            let png = grid.to_heatmap().to_png_bytes().map_err(|e| internal(&e))?;
            Ok(([(header::CONTENT_TYPE, "image/png")], png).into_response())
        }
        Some(other) => Err(ApiError::bad_request(format!("unknown format `{other}` (expected png or gatr)"))),
    }
}

async fn fallback() -> ApiError {
    ApiError::new(StatusCode::NOT_FOUND, "lookup", "no such endpoint")
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/health", get(health))
        .route("/datasets", post(create_dataset))
        .route("/datasets/{id}", get(get_dataset))
        .route("/runs", post(submit_run).get(list_runs))
        .route("/runs/{id}", get(get_run))
        .route("/runs/{id}/viz3d", get(get_viz3d))
        .route("/jobs/{id}", get(get_job))
        .route("/images/{dataset}/{sample}", get(get_image))
        .route("/attributions/{dataset}/{sample}", get(get_attribution))
        .route("/experiments", post(submit_experiment).get(list_experiments))
        .route("/experiments/{id}/report", get(get_report))
        .route("/experiments/{id}/deltas", get(get_deltas))
        .route("/experiments/{id}/table", get(get_table))
        .fallback(fallback)
        .with_state(state)
}

/// Binds `host:port` and serves until the process exits.
pub async fn serve(host: &str, port: u16, data_root: &Path, workers: usize) -> std::io::Result<()> {
    let state = AppState::open(data_root, workers)?;
    let listener = tokio::net::TcpListener::bind((host, port)).await?;
    log::info!("listening on {}", listener.local_addr()?);
    axum::serve(listener, router(state)).await
}
