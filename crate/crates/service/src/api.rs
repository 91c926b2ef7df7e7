//! HTTP+JSON API.
//!
//! | Method | Path                  |                                              |
//! |--------|-----------------------|----------------------------------------------|
//! | GET    | `/health`             | liveness probe                               |
//! | POST   | `/instances`          | upload an instance document                  |
//! | GET    | `/instances`          | list stored instance ids                     |
//! | GET    | `/instances/{id}`     | fetch an instance document                   |
//! | POST   | `/demand/estimate`    | sales CSV to demand table                    |
//! | POST   | `/solve`              | heuristic inline, exact as a job             |
//! | GET    | `/jobs`               | list jobs                                    |
//! | GET    | `/jobs/{id}`          | job status                                   |
//! | GET    | `/jobs/{id}/trace`    | line-delimited trace, `?from=N` to resume    |
//! | POST   | `/jobs/{id}/cancel`   | cooperative cancellation                     |
//! | GET    | `/solutions/{id}`     | fetch a solution document                    |
//! | POST   | `/compare`            | per-branch diff of two solutions             |
//! | POST   | `/scenarios`          | store a console scenario                     |
//! | GET    | `/scenarios`, `/scenarios/{id}` |                                    |
//!
//! Errors are `{"code", "message", "details"?}` with `code` one of
//! `VALIDATION`, `INFEASIBLE`, `TIMEOUT`, `NOT_FOUND` or `INTERNAL`.

use std::convert::Infallible;
use std::sync::Arc;
use std::time::Duration;

use axum::body::{Body, Bytes};
use axum::extract::{Path, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use lotdesign::demand::{
    build_histories, estimate_demand, ingest_deliveries, ingest_sales, observed_labels, scale_to_capacity,
    EstimateOptions, ExcludedProduct, RejectedRow,
};
use lotdesign::io::{compare_solutions, InstanceDocument, SolutionDocument};
use lotdesign::model::Warning;
use lotdesign::sfa::TraceRecord;
use lotdesign::{DemandTable, Error, Instance, SizeSet};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use tower_http::services::ServeDir;

use crate::config::Config;
use crate::jobs::{Job, JobRegistry, JobState, JobView};
use crate::solve::{self, Overrides, SolverChoice, SolverParams};
use crate::store::{Kind, Store, StoreError};

#[derive(Debug, Clone)]
pub struct AppState {
    pub store: Store,
    pub jobs: Arc<JobRegistry>,
    pub config: Arc<Config>,
}

impl AppState {
    pub fn new(config: Config) -> Result<Self, StoreError> {
        Ok(AppState {
            store: Store::open(&config.store)?,
            jobs: Arc::new(JobRegistry::new()),
            config: Arc::new(config),
        })
    }
}

pub fn router(state: AppState) -> Router {
    let static_dir = state.config.static_dir.clone();
    let api = Router::new()
        .route("/health", get(health))
        .route("/instances", post(upload_instance).get(list_instances))
        .route("/instances/{id}", get(get_instance))
        .route("/demand/estimate", post(estimate))
        .route("/solve", post(solve_handler))
        .route("/jobs", get(list_jobs))
        .route("/jobs/{id}", get(get_job))
        .route("/jobs/{id}/trace", get(job_trace))
        .route("/jobs/{id}/cancel", post(cancel_job))
        .route("/solutions/{id}", get(get_solution))
        .route("/compare", post(compare))
        .route("/scenarios", post(put_scenario).get(list_scenarios))
        .route("/scenarios/{id}", get(get_scenario))
        .with_state(state);
    match static_dir {
        Some(dir) => api.fallback_service(ServeDir::new(dir)),
        None => api,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ErrorCode {
    Validation,
    Infeasible,
    Timeout,
    NotFound,
    Internal,
}

impl ErrorCode {
    pub fn as_str(self) -> &'static str {
        match self {
            ErrorCode::Validation => "VALIDATION",
            ErrorCode::Infeasible => "INFEASIBLE",
            ErrorCode::Timeout => "TIMEOUT",
            ErrorCode::NotFound => "NOT_FOUND",
            ErrorCode::Internal => "INTERNAL",
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ErrorBody {
    pub code: ErrorCode,
    pub message: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub details: Option<Value>,
}

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    body: ErrorBody,
}

impl ApiError {
    fn new(code: ErrorCode, message: impl Into<String>) -> Self {
        let status = match code {
            ErrorCode::Validation => StatusCode::BAD_REQUEST,
            ErrorCode::Infeasible => StatusCode::UNPROCESSABLE_ENTITY,
            ErrorCode::Timeout => StatusCode::REQUEST_TIMEOUT,
            ErrorCode::NotFound => StatusCode::NOT_FOUND,
            ErrorCode::Internal => StatusCode::INTERNAL_SERVER_ERROR,
        };
        ApiError { status, body: ErrorBody { code, message: message.into(), details: None } }
    }

    fn validation(message: impl Into<String>) -> Self {
        Self::new(ErrorCode::Validation, message)
    }

    fn with_details(mut self, details: Value) -> Self {
        self.body.details = Some(details);
        self
    }
}

impl From<Error> for ApiError {
    fn from(e: Error) -> Self {
        match &e {
            Error::Validation(v) => ApiError::validation(e.to_string()).with_details(json!(v)),
            Error::Infeasible => ApiError::new(ErrorCode::Infeasible, e.to_string()),
            Error::Timeout => ApiError::new(ErrorCode::Timeout, e.to_string()),
            Error::Io(_) => ApiError::new(ErrorCode::Internal, e.to_string()),
            _ => ApiError::validation(e.to_string()),
        }
    }
}

impl From<StoreError> for ApiError {
    fn from(e: StoreError) -> Self {
        match e {
            StoreError::NotFound { .. } => ApiError::new(ErrorCode::NotFound, e.to_string()),
            _ => ApiError::new(ErrorCode::Internal, e.to_string()),
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(self.body)).into_response()
    }
}

type ApiResult<T> = Result<T, ApiError>;

/// JSON bodies are parsed by hand so malformed input gets a structured error.
fn parse<T: DeserializeOwned>(body: &[u8]) -> ApiResult<T> {
    serde_json::from_slice(body).map_err(|e| ApiError::validation(format!("invalid request body: {e}")))
}

async fn blocking<T: Send + 'static>(f: impl FnOnce() -> T + Send + 'static) -> ApiResult<T> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError::new(ErrorCode::Internal, format!("worker failed: {e}")))
}

async fn health() -> Json<Value> {
    Json(json!({"status": "ok", "version": env!("CARGO_PKG_VERSION")}))
}

#[derive(Debug, Serialize, Deserialize)]
pub struct InstanceReceipt {
    pub id: String,
    pub branches: usize,
    pub lots: usize,
    pub warnings: Vec<Warning>,
}

/// Resolve, validate and store an instance document.
fn store_instance(store: &Store, doc: InstanceDocument) -> ApiResult<(String, Instance, Vec<Warning>)> {
    let instance = doc.into_instance()?;
    let report = instance.check()?;
    let id = store.put_json(Kind::Instance, &InstanceDocument::from(&instance))?;
    Ok((id, instance, report.warnings))
}

async fn upload_instance(State(state): State<AppState>, body: Bytes) -> ApiResult<(StatusCode, Json<InstanceReceipt>)> {
    let doc: InstanceDocument = parse(&body)?;
    let (id, instance, warnings) = blocking(move || store_instance(&state.store, doc)).await??;
    let receipt = InstanceReceipt { id, branches: instance.branch_count(), lots: instance.lots.len(), warnings };
    Ok((StatusCode::CREATED, Json(receipt)))
}

async fn list_instances(State(state): State<AppState>) -> ApiResult<Json<Value>> {
    Ok(Json(json!({"ids": state.store.list(Kind::Instance)?})))
}

async fn get_instance(State(state): State<AppState>, Path(id): Path<String>) -> ApiResult<Json<InstanceDocument>> {
    Ok(Json(state.store.get_json(Kind::Instance, &id)?))
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct EstimateRequest {
    sales_csv: String,
    #[serde(default)]
    deliveries_csv: Option<String>,
    /// Defaults to the branch ids seen in the sales.
    #[serde(default)]
    branches: Option<Vec<String>>,
    /// Defaults to the size labels seen in the sales.
    #[serde(default)]
    sizes: Option<Vec<String>>,
    #[serde(default)]
    options: EstimateOptions,
    /// Scale the table to the center of `[cap_lo, cap_hi]`.
    #[serde(default)]
    cap_lo: Option<u64>,
    #[serde(default)]
    cap_hi: Option<u64>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct EstimateResponse {
    pub branches: Vec<String>,
    pub sizes: SizeSet,
    pub demand: DemandTable,
    pub scaled: bool,
    pub used_products: Vec<String>,
    pub excluded: Vec<ExcludedProduct>,
    pub observed_total_fallbacks: Vec<String>,
    pub unmatched_quantity: u64,
    pub rejects: Vec<RejectedRow>,
}

fn run_estimate(req: EstimateRequest) -> ApiResult<EstimateResponse> {
    let sales = ingest_sales(req.sales_csv.as_bytes())?;
    let deliveries = match &req.deliveries_csv {
        Some(text) => ingest_deliveries(text.as_bytes())?,
        None => Default::default(),
    };
    let (seen_branches, seen_sizes) = observed_labels(&sales.records);
    let branches = req.branches.unwrap_or(seen_branches);
    let sizes = req.sizes.map(SizeSet::new).unwrap_or(seen_sizes);
    let histories = build_histories(&sales.records, &deliveries);
    let est = estimate_demand(&histories, &branches, &sizes, req.options)?;
    let (demand, scaled) = match (req.cap_lo, req.cap_hi) {
        (Some(lo), Some(hi)) => (scale_to_capacity(&est.demand, lo, hi)?, true),
        (None, None) => (est.demand, false),
        _ => return Err(ApiError::validation("cap_lo and cap_hi go together")),
    };
    Ok(EstimateResponse {
        branches,
        sizes,
        demand,
        scaled,
        used_products: est.used_products,
        excluded: est.excluded,
        observed_total_fallbacks: est.observed_total_fallbacks,
        unmatched_quantity: est.unmatched_quantity,
        rejects: sales.rejects,
    })
}

async fn estimate(body: Bytes) -> ApiResult<Json<EstimateResponse>> {
    let req: EstimateRequest = parse(&body)?;
    Ok(Json(blocking(move || run_estimate(req)).await??))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Sync,
    Async,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolveRequest {
    #[serde(default)]
    pub instance: Option<InstanceDocument>,
    #[serde(default)]
    pub instance_id: Option<String>,
    pub solver: SolverChoice,
    /// `ExactLimits` or `SfaParams`, matching `solver`.
    #[serde(default)]
    pub params: Option<Value>,
    #[serde(default)]
    pub overrides: Overrides,
    #[serde(default)]
    pub request_id: Option<String>,
    /// Heuristic solves default to `sync`; exact solves are always jobs.
    #[serde(default)]
    pub mode: Option<Mode>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct Diagnostics {
    pub warnings: Vec<Warning>,
    pub subsets_examined: u64,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct SolveResponse {
    pub request_id: Option<String>,
    pub instance_id: String,
    pub solution_id: String,
    pub solution: SolutionDocument,
    pub trace: Vec<TraceRecord>,
    pub diagnostics: Diagnostics,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct JobAccepted {
    pub job_id: String,
    pub request_id: Option<String>,
    pub instance_id: String,
    pub job: String,
    pub trace: String,
    pub cancel: String,
}

/// Load the referenced or inline instance and apply overrides.
fn resolve_instance(store: &Store, req: &mut SolveRequest) -> ApiResult<(String, Instance, Vec<Warning>)> {
    let (id, mut instance) = match (req.instance.take(), &req.instance_id) {
        (Some(doc), None) => {
            let (id, instance, _) = store_instance(store, doc)?;
            (id, instance)
        }
        (None, Some(id)) => {
            let doc: InstanceDocument = store.get_json(Kind::Instance, id)?;
            (id.clone(), doc.into_instance()?)
        }
        _ => return Err(ApiError::validation("give exactly one of `instance` and `instance_id`")),
    };
    req.overrides.apply(&mut instance);
    let report = instance.check()?;
    Ok((id, instance, report.warnings))
}

async fn solve_handler(State(state): State<AppState>, body: Bytes) -> ApiResult<Response> {
    let mut req: SolveRequest = parse(&body)?;
    let params = SolverParams::parse(req.solver, req.params.take())
        .map_err(|e| ApiError::validation(format!("invalid params: {e}")))?;
    let store = state.store.clone();
    let (req, instance_id, instance, warnings) = blocking(move || {
        let (id, instance, warnings) = resolve_instance(&store, &mut req)?;
        Ok::<_, ApiError>((req, id, instance, warnings))
    })
    .await??;

    let budget_ok = params.time_budget().is_none_or(|b| b <= state.config.sync_time_limit);
    let sync = params.choice() == SolverChoice::Sfa && req.mode != Some(Mode::Async) && budget_ok;
    if sync {
        let store = state.store.clone();
        let response = blocking(move || {
            let mut trace = Vec::new();
            let outcome = solve::run(&instance, &params, |line| trace.push(line))?;
            let solution_id = store.put_json(Kind::Solution, &outcome.document)?;
            let trace = trace
                .iter()
                .map(|l| serde_json::from_str(l).expect("trace lines are records"))
                .collect();
            Ok::<_, ApiError>(SolveResponse {
                request_id: req.request_id,
                instance_id,
                solution_id,
                solution: outcome.document,
                trace,
                diagnostics: Diagnostics { warnings, subsets_examined: outcome.subsets_examined },
            })
        })
        .await??;
        return Ok(Json(response).into_response());
    }

    let job = state.jobs.create(params.choice(), instance_id.clone(), req.request_id.clone());
    spawn_job(state.store.clone(), job.clone(), instance, params);
    let accepted = JobAccepted {
        job: format!("/jobs/{}", job.id),
        trace: format!("/jobs/{}/trace", job.id),
        cancel: format!("/jobs/{}/cancel", job.id),
        job_id: job.id.clone(),
        request_id: req.request_id,
        instance_id,
    };
    Ok((StatusCode::ACCEPTED, Json(accepted)).into_response())
}

fn spawn_job(store: Store, job: Arc<Job>, instance: Instance, mut params: SolverParams) {
    params.set_cancel(job.cancel.clone());
    tokio::task::spawn_blocking(move || {
        let result = solve::run(&instance, &params, |line| job.push_trace(line));
        let state = match result {
            Ok(outcome) => match store.put_json(Kind::Solution, &outcome.document) {
                Ok(solution_id) => JobState::Succeeded {
                    solution_id,
                    objective: outcome.solution.objective,
                    status: outcome.solution.status,
                },
                Err(e) => failed(ApiError::from(e)),
            },
            Err(e) => failed(ApiError::from(e)),
        };
        // The stored log lets a finished trace be replayed after a restart.
        if let Err(e) = store.put_named(Kind::Trace, &job.id, job.trace_text().as_bytes()) {
            eprintln!("storing trace of {}: {e}", job.id);
        }
        job.finish(state);
    });
}

fn failed(e: ApiError) -> JobState {
    JobState::Failed { code: e.body.code.as_str().to_string(), message: e.body.message }
}

async fn list_jobs(State(state): State<AppState>) -> Json<Vec<JobView>> {
    Json(state.jobs.list())
}

fn find_job(state: &AppState, id: &str) -> ApiResult<Arc<Job>> {
    state
        .jobs
        .get(id)
        .ok_or_else(|| ApiError::new(ErrorCode::NotFound, format!("no job `{id}`")))
}

async fn get_job(State(state): State<AppState>, Path(id): Path<String>) -> ApiResult<Json<JobView>> {
    Ok(Json(find_job(&state, &id)?.view()))
}

async fn cancel_job(State(state): State<AppState>, Path(id): Path<String>) -> ApiResult<(StatusCode, Json<JobView>)> {
    let job = find_job(&state, &id)?;
    job.cancel.cancel();
    Ok((StatusCode::ACCEPTED, Json(job.view())))
}

#[derive(Debug, Deserialize)]
struct TraceQuery {
    /// Skip records with ordinal ≤ `from`.
    #[serde(default)]
    from: usize,
}

const NDJSON: &str = "application/x-ndjson";

async fn job_trace(
    State(state): State<AppState>,
    Path(id): Path<String>,
    Query(q): Query<TraceQuery>,
) -> ApiResult<Response> {
    let Some(job) = state.jobs.get(&id) else {
        // Jobs from an earlier run are replayed from the stored log.
        let bytes = state.store.get_bytes(Kind::Trace, &id)?;
        let text = String::from_utf8_lossy(&bytes);
        let tail: String = text.lines().skip(q.from).map(|l| format!("{l}\n")).collect();
        return Ok(([(header::CONTENT_TYPE, NDJSON)], tail).into_response());
    };
    let stream = futures::stream::unfold((job, q.from), |(job, next)| async move {
        loop {
            let (lines, finished) = {
                let notified = job.notified();
                let (lines, finished) = job.trace_since(next);
                if lines.is_empty() && !finished {
                    // The timeout covers notifications that raced the check above.
                    let _ = tokio::time::timeout(Duration::from_millis(250), notified).await;
                    continue;
                }
                (lines, finished)
            };
            if lines.is_empty() && finished {
                return None;
            }
            let chunk: String = lines.iter().map(|l| format!("{l}\n")).collect();
            let next = next + lines.len();
            return Some((Ok::<_, Infallible>(chunk), (job, next)));
        }
    });
    Ok(([(header::CONTENT_TYPE, NDJSON)], Body::from_stream(stream)).into_response())
}

async fn get_solution(State(state): State<AppState>, Path(id): Path<String>) -> ApiResult<Json<SolutionDocument>> {
    Ok(Json(state.store.get_json(Kind::Solution, &id)?))
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum SolutionRef {
    Id(String),
    Inline(Box<SolutionDocument>),
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct CompareRequest {
    a: SolutionRef,
    b: SolutionRef,
}

fn load_solution(store: &Store, r: SolutionRef) -> ApiResult<SolutionDocument> {
    match r {
        SolutionRef::Id(id) => Ok(store.get_json(Kind::Solution, &id)?),
        SolutionRef::Inline(doc) => Ok(*doc),
    }
}

async fn compare(State(state): State<AppState>, body: Bytes) -> ApiResult<Json<lotdesign::io::PlanComparison>> {
    let req: CompareRequest = parse(&body)?;
    let a = load_solution(&state.store, req.a)?;
    let b = load_solution(&state.store, req.b)?;
    Ok(Json(compare_solutions(&a, &b)?))
}

async fn put_scenario(State(state): State<AppState>, body: Bytes) -> ApiResult<(StatusCode, Json<Value>)> {
    let doc: Value = parse(&body)?;
    if !doc.is_object() {
        return Err(ApiError::validation("a scenario is a JSON object"));
    }
    let id = state.store.put_json(Kind::Scenario, &doc)?;
    Ok((StatusCode::CREATED, Json(json!({ "id": id }))))
}

async fn list_scenarios(State(state): State<AppState>) -> ApiResult<Json<Value>> {
    Ok(Json(json!({"ids": state.store.list(Kind::Scenario)?})))
}

async fn get_scenario(State(state): State<AppState>, Path(id): Path<String>) -> ApiResult<Json<Value>> {
    Ok(Json(state.store.get_json(Kind::Scenario, &id)?))
}

/// Serve until interrupted.
pub async fn serve(state: AppState) -> std::io::Result<()> {
    let addr = format!("{}:{}", state.config.host, state.config.port);
    let listener = tokio::net::TcpListener::bind(&addr).await?;
    eprintln!("listening on http://{}", listener.local_addr()?);
    axum::serve(listener, router(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}
