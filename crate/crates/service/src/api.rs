//! Read-only HTTP API over a loaded run.
//!
//! | method | path | body |
//! |---|---|---|
//! | GET | `/advertisers` | |
//! | GET | `/advertisers/{id}/history` | |
//! | GET | `/clusters` | |
//! | GET | `/reports/backtest` | |
//! | POST | `/forecast` | [`ForecastRequest`] |
//!
//! Errors are `{"error": message}` with status 404 for unknown advertisers,
//! models and artifacts not computed yet, 422 for invalid requests and 500
//! otherwise. JSON schemas for every payload live in `schema/`.

use std::collections::HashMap;
use std::sync::{Arc, RwLock};

use axum::extract::rejection::JsonRejection;
use axum::extract::{Path, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use chrono::NaiveDate;
use cpc_core::clustering::{category_clusters, compare_assignments, ClusterMethod};
use cpc_core::pipeline::{read_backtest_csv, read_summary_csv, BacktestRow, SummaryRow};
use serde::{Deserialize, Serialize};

use crate::error::ServiceError;
use crate::forecast::{self, ForecastRequest, ForecastResponse};
use crate::store::{ModelBundle, RunStore};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdvertiserSummary {
    pub advertiser_id: String,
    pub category: String,
    pub start: NaiveDate,
    pub end: NaiveDate,
    pub days: usize,
    /// Config tags with trained models.
    pub models: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct History {
    pub advertiser_id: String,
    pub category: String,
    pub dates: Vec<NaiveDate>,
    pub cpc: Vec<f64>,
    pub budget: Vec<f64>,
    pub clicks: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClustersView {
    pub method: ClusterMethod,
    pub k: usize,
    pub labels: std::collections::BTreeMap<String, usize>,
    /// Category names in the column order of `contingency`.
    pub categories: Vec<String>,
    /// Advertisers in cluster `i` and category `j`.
    pub contingency: Vec<Vec<usize>>,
    /// Adjusted Rand index against the category clusters.
    pub ari_vs_category: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BacktestView {
    pub rows: Vec<BacktestRow>,
    pub summary: Vec<SummaryRow>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub error: String,
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

impl From<ServiceError> for ApiError {
    fn from(e: ServiceError) -> Self {
        use cpc_core::Error as E;
        let status = match &e {
            ServiceError::Core(E::UnknownAdvertiser(_))
            | ServiceError::UnknownModel { .. }
            | ServiceError::NotComputed(_)
            | ServiceError::NoModels(_) => StatusCode::NOT_FOUND,
            e if e.is_validation() => StatusCode::UNPROCESSABLE_ENTITY,
            _ => StatusCode::INTERNAL_SERVER_ERROR,
        };
        ApiError::new(status, e.to_string())
    }
}

impl From<JsonRejection> for ApiError {
    fn from(e: JsonRejection) -> Self {
        ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, e.body_text())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(ErrorBody { error: self.message })).into_response()
    }
}

type ApiResult<T> = Result<Json<T>, ApiError>;

/// Shared, immutable run plus a read-through model cache.
pub struct AppState {
    store: RunStore,
    models: HashMap<String, Vec<String>>,
    cache: RwLock<HashMap<(String, String), Arc<ModelBundle>>>,
}

impl AppState {
    pub fn new(store: RunStore) -> Result<Self, ServiceError> {
        let mut models: HashMap<String, Vec<String>> = HashMap::new();
        for (adv, tag) in store.bundle_keys()? {
            models.entry(adv).or_default().push(tag);
        }
        Ok(Self {
            store,
            models,
            cache: RwLock::new(HashMap::new()),
        })
    }

    pub fn store(&self) -> &RunStore {
        &self.store
    }

    fn bundle(&self, advertiser_id: &str, config_tag: &str) -> Result<Arc<ModelBundle>, ServiceError> {
        let key = (advertiser_id.to_string(), config_tag.to_string());
        if let Some(b) = self.cache.read().expect("cache lock").get(&key) {
            return Ok(Arc::clone(b));
        }
        let mut cache = self.cache.write().expect("cache lock");
        if let Some(b) = cache.get(&key) {
            return Ok(Arc::clone(b));
        }
        let bundle = self
            .store
            .load_bundle(advertiser_id, config_tag)?
            .ok_or_else(|| ServiceError::UnknownModel {
                advertiser_id: advertiser_id.to_string(),
                config_tag: config_tag.to_string(),
            })?;
        let bundle = Arc::new(bundle);
        cache.insert(key, Arc::clone(&bundle));
        Ok(bundle)
    }

    pub fn advertisers(&self) -> Vec<AdvertiserSummary> {
        self.store
            .panel()
            .advertisers
            .iter()
            .map(|a| AdvertiserSummary {
                advertiser_id: a.advertiser_id.clone(),
                category: a.category.clone(),
                start: a.dates[0],
                end: a.dates[a.len() - 1],
                days: a.len(),
                models: self.models.get(&a.advertiser_id).cloned().unwrap_or_default(),
            })
            .collect()
    }

    pub fn history(&self, advertiser_id: &str) -> Result<History, ServiceError> {
        let a = self
            .store
            .panel()
            .get(advertiser_id)
            .ok_or_else(|| cpc_core::Error::UnknownAdvertiser(advertiser_id.to_string()))?;
        Ok(History {
            advertiser_id: a.advertiser_id.clone(),
            category: a.category.clone(),
            dates: a.dates.clone(),
            cpc: a.cpc.clone(),
            budget: a.adbudget.clone(),
            clicks: a.adclicks.clone(),
        })
    }

    pub fn clusters(&self) -> Result<ClustersView, ServiceError> {
        let c = self
            .store
            .clusters()?
            .ok_or_else(|| ServiceError::NotComputed("clusters".into()))?;
        let categories = category_clusters(self.store.panel());
        let cmp = compare_assignments(&c, &categories)?;
        Ok(ClustersView {
            method: c.method,
            k: c.k,
            labels: c.labels,
            categories: self.store.panel().categories.iter().cloned().collect(),
            contingency: cmp.contingency,
            ari_vs_category: cmp.ari,
        })
    }

    pub fn backtest_report(&self) -> Result<BacktestView, ServiceError> {
        let missing = || ServiceError::NotComputed("backtest report".into());
        let rows = self.store.read_report("backtest.csv")?.ok_or_else(missing)?;
        let summary = self.store.read_report("summary.csv")?.ok_or_else(missing)?;
        Ok(BacktestView {
            rows: read_backtest_csv(rows.as_slice())?,
            summary: read_summary_csv(summary.as_slice())?,
        })
    }

    pub fn forecast(&self, request: &ForecastRequest) -> Result<ForecastResponse, ServiceError> {
        if self.store.panel().get(&request.advertiser_id).is_none() {
            return Err(cpc_core::Error::UnknownAdvertiser(request.advertiser_id.clone()).into());
        }
        let bundle = self.bundle(&request.advertiser_id, &request.config_tag)?;
        forecast::forecast(&self.store, &bundle, request)
    }
}

async fn list_advertisers(State(state): State<Arc<AppState>>) -> Json<Vec<AdvertiserSummary>> {
    Json(state.advertisers())
}

async fn get_history(State(state): State<Arc<AppState>>, Path(id): Path<String>) -> ApiResult<History> {
    Ok(Json(state.history(&id)?))
}

async fn get_clusters(State(state): State<Arc<AppState>>) -> ApiResult<ClustersView> {
    Ok(Json(state.clusters()?))
}

async fn get_backtest(State(state): State<Arc<AppState>>) -> ApiResult<BacktestView> {
    Ok(Json(state.backtest_report()?))
}

async fn post_forecast(
    State(state): State<Arc<AppState>>,
    body: Result<Json<ForecastRequest>, JsonRejection>,
) -> ApiResult<ForecastResponse> {
    let Json(request) = body?;
    let state = Arc::clone(&state);
    let response = tokio::task::spawn_blocking(move || state.forecast(&request))
        .await
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))??;
    Ok(Json(response))
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/advertisers", get(list_advertisers))
        .route("/advertisers/{id}/history", get(get_history))
        .route("/clusters", get(get_clusters))
        .route("/reports/backtest", get(get_backtest))
        .route("/forecast", post(post_forecast))
        .with_state(state)
}
