//! Edge HTTP service. The model registry is loaded once in the background and
//! is immutable afterwards; picking up new checkpoints needs a restart.

use std::collections::BTreeMap;
use std::fs;
use std::sync::{Arc, OnceLock};

use axum::body::Bytes;
use axum::extract::{Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use chrono::{DateTime, Duration, Utc};
use serde::{Deserialize, Serialize};
use serde_json::json;
use twinforecast_core::eval::{InsightDocument, LatencyStats};
use twinforecast_core::features::{FeatureFrame, WindowSample};
use twinforecast_core::forecast::{build_model, load_expecting, ArchConfig, Architecture, ForecastTask, Forecaster};
use twinforecast_core::twin::TwinGraph;

use crate::error::CliError;
use crate::project::{model_name, DatasetArtifact, Project, Target, HORIZON, LOOKBACK};

pub const API_VERSION: u32 = 1;

/// Preference when a request does not name a model.
const DEFAULT_ORDER: [Architecture; 5] = [
    Architecture::Tide,
    Architecture::Nhits,
    Architecture::Tcn,
    Architecture::Lstm,
    Architecture::Sn24,
];

pub struct LoadedModel {
    pub model: Forecaster,
    pub frame: Arc<FeatureFrame>,
    pub checksum: String,
}

pub type Registry = BTreeMap<(String, Target), BTreeMap<Architecture, Arc<LoadedModel>>>;

pub struct AppState {
    pub project: Project,
    pub twin: TwinGraph,
    pub registry: OnceLock<Registry>,
}

impl AppState {
    /// Checks the twin and datasets; models are not loaded yet.
    pub fn open(project: Project) -> Result<Self, CliError> {
        let twin = project.load_twin()?;
        Ok(AppState {
            project,
            twin,
            registry: OnceLock::new(),
        })
    }

    fn datasets(&self) -> Result<Vec<DatasetArtifact>, CliError> {
        let dir = self.project.config.data_dir.join("datasets");
        let mut out = Vec::new();
        if dir.is_dir() {
            let mut paths: Vec<_> = fs::read_dir(&dir)?.filter_map(|e| e.ok()).map(|e| e.path()).collect();
            paths.sort();
            for p in paths.into_iter().filter(|p| p.extension().is_some_and(|e| e == "json")) {
                out.push(self.project.read_json(&p)?);
            }
        }
        Ok(out)
    }

    /// Loads every checkpoint in the registry plus an SN24 baseline per dataset.
    pub fn load_registry(&self) -> Result<usize, CliError> {
        let mut registry = Registry::new();
        let mut count = 0;
        for d in self.datasets()? {
            let frame = self.project.dataset_frame(&d)?;
            let mut models = BTreeMap::new();
            for arch in Architecture::ALL {
                let path = self.project.checkpoint_path(&model_name(&d.room, d.target, arch));
                let model = if path.exists() {
                    load_expecting(&path, &d.manifest)?
                } else if arch == Architecture::Sn24 {
                    build_model(ArchConfig::Sn24, ForecastTask::new(d.manifest.clone()), 0)?
                } else {
                    continue;
                };
                let frame = match model.scalers() {
                    Some(s) if s != frame.scalers() => self.project.build_frame(&d.room, d.target, Some(s))?.0,
                    _ => frame.clone(),
                };
                log::info!("loaded {} for {}/{}", arch, d.room, d.target);
                let checksum = model.weights_digest();
                models.insert(arch, Arc::new(LoadedModel { model, frame, checksum }));
                count += 1;
            }
            registry.insert((d.room.clone(), d.target), models);
        }
        let _ = self.registry.set(registry);
        Ok(count)
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ForecastRequest {
    pub room: String,
    pub target: String,
    /// Last observed hour; forecasts start one hour later.
    pub origin: DateTime<Utc>,
    #[serde(default)]
    pub model: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForecastStep {
    pub timestamp: DateTime<Utc>,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForecastResponse {
    pub api_version: u32,
    pub room: String,
    pub target: String,
    pub origin: DateTime<Utc>,
    pub model: String,
    pub checksum: String,
    pub unit: String,
    pub steps: Vec<ForecastStep>,
}

struct ApiError(StatusCode, String);

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.0, Json(json!({"api_version": API_VERSION, "error": self.1}))).into_response()
    }
}

fn bad_request(m: impl Into<String>) -> ApiError {
    ApiError(StatusCode::BAD_REQUEST, m.into())
}

fn not_found(m: impl Into<String>) -> ApiError {
    ApiError(StatusCode::NOT_FOUND, m.into())
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/health", get(health))
        .route("/twin", get(twin))
        .route("/forecast", post(forecast))
        .route("/insights", get(insights))
        .with_state(state)
}

async fn health(State(s): State<Arc<AppState>>) -> Json<serde_json::Value> {
    let (status, models) = match s.registry.get() {
        Some(r) => (
            "ready",
            r.iter()
                .flat_map(|((room, target), m)| m.keys().map(move |a| model_name(room, *target, *a)))
                .collect::<Vec<_>>(),
        ),
        None => ("loading", Vec::new()),
    };
    Json(json!({
        "api_version": API_VERSION,
        "status": status,
        "version": env!("CARGO_PKG_VERSION"),
        "models": models,
    }))
}

async fn twin(State(s): State<Arc<AppState>>) -> Response {
    (
        [(axum::http::header::CONTENT_TYPE, "application/json")],
        s.twin.to_json(),
    )
        .into_response()
}

fn predict(req: &ForecastRequest, loaded: &LoadedModel) -> Result<Vec<f64>, ApiError> {
    let frame = &loaded.frame;
    let idx = frame.index_of(req.origin).ok_or_else(|| {
        bad_request(format!(
            "origin {} is outside the stored series",
            req.origin.to_rfc3339()
        ))
    })?;
    if idx + 1 < LOOKBACK || idx + 1 + HORIZON > frame.len() {
        return Err(bad_request(format!(
            "origin {} needs {LOOKBACK} hours of history and {HORIZON} hours of covariates",
            req.origin.to_rfc3339()
        )));
    }
    let sample =
        WindowSample::at(frame, idx + 1 - LOOKBACK, LOOKBACK, HORIZON).map_err(|e| bad_request(e.to_string()))?;
    loaded
        .model
        .predict(&sample)
        .map_err(|e| ApiError(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))
}

async fn forecast(State(s): State<Arc<AppState>>, body: Bytes) -> Result<Json<ForecastResponse>, ApiError> {
    let req: ForecastRequest =
        serde_json::from_slice(&body).map_err(|e| bad_request(format!("malformed request: {e}")))?;
    let target: Target = req.target.parse().map_err(bad_request)?;
    let arch = req
        .model
        .as_deref()
        .map(|m| m.parse::<Architecture>().map_err(|e| not_found(e.to_string())))
        .transpose()?;
    let registry = s
        .registry
        .get()
        .ok_or_else(|| ApiError(StatusCode::SERVICE_UNAVAILABLE, "models are still loading".into()))?;
    let models = registry
        .get(&(req.room.clone(), target))
        .ok_or_else(|| not_found(format!("no models for room {:?} and {target}", req.room)))?;
    let (arch, loaded) = match arch {
        Some(a) => (
            a,
            models
                .get(&a)
                .ok_or_else(|| not_found(format!("no {a} model for {}", req.room)))?,
        ),
        None => DEFAULT_ORDER
            .iter()
            .find_map(|a| models.get(a).map(|m| (*a, m)))
            .ok_or_else(|| not_found(format!("no models for room {:?}", req.room)))?,
    };
    let loaded = loaded.clone();
    let job = req.clone();
    let values = tokio::task::spawn_blocking(move || predict(&job, &loaded).map(|v| (v, loaded)))
        .await
        .map_err(|e| ApiError(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))?;
    let (values, loaded) = values?;
    let steps = values
        .into_iter()
        .enumerate()
        .map(|(i, value)| ForecastStep {
            timestamp: req.origin + Duration::hours(i as i64 + 1),
            value,
        })
        .collect();
    Ok(Json(ForecastResponse {
        api_version: API_VERSION,
        room: req.room,
        target: target.to_string(),
        origin: req.origin,
        model: arch.tag().to_string(),
        checksum: loaded.checksum.clone(),
        unit: loaded.frame.target_unit().to_string(),
        steps,
    }))
}

#[derive(Debug, Deserialize)]
struct InsightQuery {
    room: Option<String>,
    target: Option<String>,
    model: Option<String>,
}

/// Latest evaluation report, optionally narrowed to a room, target and model.
async fn insights(State(s): State<Arc<AppState>>, Query(q): Query<InsightQuery>) -> Result<Response, ApiError> {
    let dir = s.project.config.registry.join("reports");
    let target = q
        .target
        .as_deref()
        .map(str::parse::<Target>)
        .transpose()
        .map_err(bad_request)?;
    let arch = q
        .model
        .as_deref()
        .map(|m| m.parse::<Architecture>().map_err(|e| bad_request(e.to_string())))
        .transpose()?;
    let prefix = match (&q.room, target, arch) {
        (Some(r), Some(t), Some(a)) => model_name(r, t, a),
        (Some(r), Some(t), None) => format!("{r}_{t}_"),
        (Some(r), None, _) => format!("{r}_"),
        _ => String::new(),
    };
    let mut latest: Option<(std::time::SystemTime, std::path::PathBuf)> = None;
    if let Ok(entries) = fs::read_dir(&dir) {
        for e in entries.flatten() {
            let name = e.file_name().to_string_lossy().into_owned();
            let Some(stem) = name.strip_suffix(".json") else {
                continue;
            };
            if stem.ends_with(".latency") || !stem.starts_with(&prefix) {
                continue;
            }
            let modified = e.metadata().and_then(|m| m.modified()).unwrap_or(std::time::UNIX_EPOCH);
            if latest
                .as_ref()
                .is_none_or(|(t, p)| (modified, e.path()) > (*t, p.clone()))
            {
                latest = Some((modified, e.path()));
            }
        }
    }
    let (_, path) = latest.ok_or_else(|| not_found("no evaluation reports yet"))?;
    let mut doc: InsightDocument = twinforecast_core::eval::read_report(&path)
        .map_err(|e| ApiError(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))?;
    if doc.latency.is_none() {
        let latency = path.with_extension("latency.json");
        if let Ok(text) = fs::read_to_string(latency) {
            doc.latency = serde_json::from_str::<LatencyStats>(&text).ok();
        }
    }
    Ok(Json(json!({"api_version": API_VERSION, "insight": doc})).into_response())
}

pub fn run(project: Project, port: Option<u16>) -> Result<(), CliError> {
    let addr = format!("{}:{}", project.config.bind, port.unwrap_or(project.config.port));
    let state = Arc::new(AppState::open(project)?);
    let rt = tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()
        .map_err(|e| CliError::Internal(e.to_string()))?;
    rt.block_on(async move {
        let listener = tokio::net::TcpListener::bind(&addr)
            .await
            .map_err(|e| CliError::User(format!("cannot bind {addr}: {e}")))?;
        log::info!("listening on http://{addr}");
        let loader = state.clone();
        tokio::task::spawn_blocking(move || match loader.load_registry() {
            Ok(0) => log::warn!("no datasets found; run preprocess and train first"),
            Ok(n) => log::info!("registry ready with {n} models"),
            Err(e) => log::error!("loading models failed: {e}"),
        });
        axum::serve(listener, router(state))
            .with_graceful_shutdown(async {
                let _ = tokio::signal::ctrl_c().await;
            })
            .await
            .map_err(|e| CliError::Internal(e.to_string()))
    })
}
