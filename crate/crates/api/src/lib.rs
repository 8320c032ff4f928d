//! HTTP service over a [`Workspace`], mounted under `/api/v1`.
//!
//! Handlers parse the request, call the matching workspace method and
//! serialize its result. Classification runs as a background job polled
//! through `/jobs/{id}`.

mod error;
mod jobs;

use std::sync::{Arc, RwLock, RwLockReadGuard, RwLockWriteGuard};

use axum::extract::rejection::{JsonRejection, QueryRejection};
use axum::extract::{Path, Query, State};
use axum::http::{header, StatusCode};
use axum::response::IntoResponse;
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};

use isomatrix_core::classifier::{BackendConfig, BackendKind, Classifier, PromptTemplate};
use isomatrix_core::ingestion::{FieldMapping, TableFormat};
use isomatrix_core::matcher::{self, parse_needs, ProfileVector};
use isomatrix_core::model::{LikertScore, ProjectKind};
use isomatrix_core::pipeline::{HeatmapRequest, Selection};
use isomatrix_core::reporting::CatalogCell;
use isomatrix_core::store::Filter;
use isomatrix_core::taxonomy::CellKey;
use isomatrix_core::{ReviewRecord, Workspace};

pub use error::{ApiError, ErrorCode};
pub use jobs::{Job, JobStatus};

use jobs::JobRegistry;

pub const API_PREFIX: &str = "/api/v1";

/// Classifier settings used by `POST /classify`.
#[derive(Debug, Clone)]
pub struct ServiceConfig {
    pub backend: BackendConfig,
    pub template: PromptTemplate,
    pub parallelism: usize,
}

#[derive(Clone)]
pub struct AppState {
    workspace: Arc<RwLock<Workspace>>,
    config: Arc<ServiceConfig>,
    jobs: JobRegistry,
}

impl AppState {
    pub fn new(workspace: Workspace, config: ServiceConfig) -> Self {
        AppState {
            workspace: Arc::new(RwLock::new(workspace)),
            config: Arc::new(config),
            jobs: JobRegistry::default(),
        }
    }

    pub fn workspace(&self) -> &Arc<RwLock<Workspace>> {
        &self.workspace
    }

    fn read(&self) -> Result<RwLockReadGuard<'_, Workspace>, ApiError> {
        self.workspace
            .read()
            .map_err(|_| ApiError::new(ErrorCode::Internal, "workspace lock poisoned"))
    }

    fn write(&self) -> Result<RwLockWriteGuard<'_, Workspace>, ApiError> {
        self.workspace
            .write()
            .map_err(|_| ApiError::new(ErrorCode::Internal, "workspace lock poisoned"))
    }
}

pub fn router(state: AppState) -> Router {
    let api = Router::new()
        .route("/datasets", post(ingest))
        .route("/classify", post(classify))
        .route("/jobs/:id", get(job))
        .route("/projects", get(projects))
        .route("/projects/:id", get(project))
        .route("/projects/:id/assessment", get(assessment))
        .route("/reviews", post(review))
        .route("/analytics/coverage", get(coverage))
        .route("/analytics/agreement", get(agreement))
        .route("/analytics/gap", get(gap))
        .route("/match", post(match_needs))
        .route("/reports/coverage.csv", get(coverage_csv))
        .route("/reports/heatmap.svg", get(heatmap_svg))
        .fallback(|| async { ApiError::not_found("no such endpoint") });
    Router::new()
        .nest(API_PREFIX, api)
        .fallback(|| async { ApiError::not_found("no such endpoint") })
        .with_state(state)
}

pub async fn serve(listener: tokio::net::TcpListener, state: AppState) -> std::io::Result<()> {
    log::info!("listening on http://{}{API_PREFIX}", listener.local_addr()?);
    axum::serve(listener, router(state)).await
}

type ApiResult<T> = Result<T, ApiError>;

fn body<T>(payload: Result<Json<T>, JsonRejection>) -> ApiResult<T> {
    payload
        .map(|Json(v)| v)
        .map_err(|e| ApiError::validation(e.body_text()))
}

fn query<T>(q: Result<Query<T>, QueryRejection>) -> ApiResult<T> {
    q.map(|Query(v)| v).map_err(|e| ApiError::validation(e.body_text()))
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DatasetFormat {
    #[default]
    Csv,
    Json,
}

/// Inline dataset upload.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetRequest {
    pub content: String,
    #[serde(default)]
    pub format: DatasetFormat,
    pub mapping: FieldMapping,
}

async fn ingest(State(s): State<AppState>, payload: Result<Json<DatasetRequest>, JsonRejection>) -> ApiResult<impl IntoResponse> {
    let req = body(payload)?;
    let format = match req.format {
        DatasetFormat::Csv => TableFormat::Csv,
        DatasetFormat::Json => TableFormat::Json,
    };
    let report = s.write()?.ingest_bytes(req.content.as_bytes(), format, &req.mapping)?;
    Ok(Json(report))
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AllProjects {
    #[default]
    All,
}

/// `"all"` or an explicit id list.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ProjectSelector {
    All(AllProjects),
    Ids(Vec<String>),
}

impl Default for ProjectSelector {
    fn default() -> Self {
        ProjectSelector::All(AllProjects::All)
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassifyRequest {
    #[serde(default)]
    pub projects: ProjectSelector,
    #[serde(default)]
    pub source: Option<String>,
    /// Overrides the configured backend kind.
    #[serde(default)]
    pub backend: Option<BackendKind>,
    #[serde(default)]
    pub parallelism: Option<usize>,
}

async fn classify(
    State(s): State<AppState>,
    payload: Result<Json<ClassifyRequest>, JsonRejection>,
) -> ApiResult<impl IntoResponse> {
    let req = body(payload)?;
    let selection = Selection {
        source: req.source,
        ids: match req.projects {
            ProjectSelector::All(_) => None,
            ProjectSelector::Ids(ids) => Some(ids),
        },
    };
    let mut backend = s.config.backend.clone();
    if let Some(kind) = req.backend {
        backend.backend_kind = kind;
    }
    let parallelism = req.parallelism.unwrap_or(s.config.parallelism);
    if parallelism == 0 {
        return Err(ApiError::validation("parallelism must be positive"));
    }

    let (projects, classifier) = {
        let ws = s.read()?;
        let projects = ws.select(&selection)?;
        let classifier = Classifier::from_config(backend, ws.taxonomy().clone(), s.config.template.clone())?;
        (projects, classifier)
    };
    let job = s.jobs.create(projects.len());
    let id = job.id.clone();
    let state = s.clone();
    tokio::task::spawn_blocking(move || {
        let results = classifier.classify_batch_with_progress(&projects, parallelism, |_, _| state.jobs.advance(&id));
        let outcome = state.write().and_then(|mut ws| ws.record_batch(&projects, results).map_err(ApiError::from));
        match outcome {
            Ok(summary) => {
                log::info!("job {id}: {} classified, {} failed", summary.classified.len(), summary.failed.len());
                state.jobs.finish(&id, Ok(summary));
            }
            Err(e) => {
                log::error!("job {id}: {}", e.message);
                state.jobs.finish(&id, Err(e));
            }
        }
    });
    Ok((StatusCode::ACCEPTED, Json(job)))
}

async fn job(State(s): State<AppState>, Path(id): Path<String>) -> ApiResult<Json<Job>> {
    s.jobs
        .get(&id)
        .map(Json)
        .ok_or_else(|| ApiError::not_found(format!("job {id:?} not found")))
}

#[derive(Debug, Clone, Default, Deserialize)]
pub struct ProjectQuery {
    pub source: Option<String>,
    pub kind: Option<ProjectKind>,
}

async fn projects(State(s): State<AppState>, q: Result<Query<ProjectQuery>, QueryRejection>) -> ApiResult<impl IntoResponse> {
    let q = query(q)?;
    let filter = Filter {
        source: q.source,
        kind: q.kind,
        ..Filter::default()
    };
    Ok(Json(s.read()?.projects(&filter)?))
}

async fn project(State(s): State<AppState>, Path(id): Path<String>) -> ApiResult<impl IntoResponse> {
    Ok(Json(s.read()?.project(&id)?))
}

async fn assessment(State(s): State<AppState>, Path(id): Path<String>) -> ApiResult<impl IntoResponse> {
    Ok(Json(s.read()?.assessment(&id)?))
}

async fn review(State(s): State<AppState>, payload: Result<Json<ReviewRecord>, JsonRejection>) -> ApiResult<impl IntoResponse> {
    let record = body(payload)?;
    Ok(Json(s.write()?.submit_review(&record)?))
}

#[derive(Debug, Clone, Default, Deserialize)]
pub struct SourceQuery {
    pub source: Option<String>,
}

async fn coverage(State(s): State<AppState>, q: Result<Query<SourceQuery>, QueryRejection>) -> ApiResult<impl IntoResponse> {
    let q = query(q)?;
    Ok(Json(s.read()?.coverage(q.source.as_deref())?))
}

async fn agreement(State(s): State<AppState>) -> ApiResult<impl IntoResponse> {
    Ok(Json(s.read()?.agreement()?))
}

#[derive(Debug, Clone, Deserialize)]
pub struct GapQuery {
    pub plans: String,
    pub activities: String,
}

async fn gap(State(s): State<AppState>, q: Result<Query<GapQuery>, QueryRejection>) -> ApiResult<impl IntoResponse> {
    let q = query(q)?;
    Ok(Json(s.read()?.gap(&q.plans, &q.activities)?))
}

/// Needs as a cell list: the `issue:purpose:scale=score` shorthand or
/// structured entries.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum NeedsCells {
    Shorthand(String),
    List(Vec<CatalogCell>),
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MatchRequest {
    #[serde(default)]
    pub vector: Option<Vec<i64>>,
    #[serde(default)]
    pub cells: Option<NeedsCells>,
    #[serde(default)]
    pub top_k: Option<usize>,
}

fn needs_vector(req: &MatchRequest, ws: &Workspace) -> ApiResult<ProfileVector> {
    match (&req.vector, &req.cells) {
        (Some(v), None) => ProfileVector::from_components(v).map_err(|e| ApiError::validation(e.to_string())),
        (None, Some(NeedsCells::Shorthand(text))) => {
            parse_needs(text, ws.taxonomy()).map_err(|e| ApiError::validation(e.to_string()))
        }
        (None, Some(NeedsCells::List(cells))) => {
            let mut v = ProfileVector::zero();
            for c in cells {
                let score = LikertScore::new(c.score as i64).map_err(|e| ApiError::validation(e.to_string()))?;
                v.set(CellKey::new(c.issue, c.purpose), c.scale, score);
            }
            Ok(v)
        }
        (None, None) => Err(ApiError::validation("one of `vector` or `cells` is required")),
        (Some(_), Some(_)) => Err(ApiError::validation("give either `vector` or `cells`, not both")),
    }
}

async fn match_needs(State(s): State<AppState>, payload: Result<Json<MatchRequest>, JsonRejection>) -> ApiResult<impl IntoResponse> {
    let req = body(payload)?;
    let ws = s.read()?;
    let needs = needs_vector(&req, &ws)?;
    let results: Vec<matcher::MatchResult> = ws.match_needs(&needs, req.top_k)?;
    Ok(Json(results))
}

async fn coverage_csv(State(s): State<AppState>, q: Result<Query<SourceQuery>, QueryRejection>) -> ApiResult<impl IntoResponse> {
    let q = query(q)?;
    let csv = s.read()?.coverage_csv(q.source.as_deref())?;
    Ok(([(header::CONTENT_TYPE, "text/csv; charset=utf-8")], csv))
}

async fn heatmap_svg(State(s): State<AppState>, q: Result<Query<HeatmapRequest>, QueryRejection>) -> ApiResult<impl IntoResponse> {
    let req = query(q)?;
    let svg = s.read()?.heatmap_svg(&req)?;
    Ok(([(header::CONTENT_TYPE, "image/svg+xml")], svg))
}
