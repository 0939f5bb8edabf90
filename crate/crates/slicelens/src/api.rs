//! JSON-over-HTTP interface to an [`Engine`], mounted under `/api/v1`.
//!
//! Errors are `{"error": {"code": ..., "message": ...}}` with status 400
//! (`validation`), 404 (`not_found`), 409 (`not_ready` or `conflict`) or 500.
//! Condition lists in query strings are JSON arrays in the `conditions`
//! parameter.

use std::sync::Arc;

use axum::extract::rejection::{JsonRejection, QueryRejection};
use axum::extract::{Path, Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post, put};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use serde_json::json;
use slicelens_core::{Condition, DiscoveryConfig};

use crate::engine::{
    ApiError, CompareRequest, ConceptDraft, Engine, RuleDraft, RuleFilter, DEFAULT_PAGE_SIZE,
};

impl ApiError {
    pub fn status(&self) -> StatusCode {
        match self {
            ApiError::Validation(_) => StatusCode::BAD_REQUEST,
            ApiError::NotFound(_) => StatusCode::NOT_FOUND,
            ApiError::NotReady(_) | ApiError::Conflict(_) => StatusCode::CONFLICT,
            ApiError::Internal(_) => StatusCode::INTERNAL_SERVER_ERROR,
        }
    }

    pub fn code(&self) -> &'static str {
        match self {
            ApiError::Validation(_) => "validation",
            ApiError::NotFound(_) => "not_found",
            ApiError::NotReady(_) => "not_ready",
            ApiError::Conflict(_) => "conflict",
            ApiError::Internal(_) => "internal",
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = json!({"error": {"code": self.code(), "message": self.to_string()}});
        (self.status(), Json(body)).into_response()
    }
}

impl From<JsonRejection> for ApiError {
    fn from(e: JsonRejection) -> Self {
        ApiError::Validation(e.body_text())
    }
}

impl From<QueryRejection> for ApiError {
    fn from(e: QueryRejection) -> Self {
        ApiError::Validation(e.body_text())
    }
}

type Shared = State<Arc<Engine>>;
type Reply<T> = Result<Json<T>, ApiError>;

#[derive(Debug, Default, Serialize, Deserialize)]
pub struct ConditionQuery {
    pub conditions: Option<String>,
    pub page: Option<usize>,
    pub page_size: Option<usize>,
}

impl ConditionQuery {
    fn conditions(&self) -> Result<Vec<Condition>, ApiError> {
        match &self.conditions {
            None => Ok(Vec::new()),
            Some(s) => serde_json::from_str(s)
                .map_err(|e| ApiError::Validation(format!("conditions: {e}"))),
        }
    }
}

pub fn router(engine: Arc<Engine>) -> Router {
    let api = Router::new()
        .route("/summary", get(summary))
        .route("/rules", get(rules))
        .route("/rules/evaluate", post(evaluate))
        .route("/documents", get(documents))
        .route("/stats/overall", get(overall))
        .route("/stats/subpopulation", get(subpopulation))
        .route("/projection", get(projection))
        .route("/concepts", get(list_concepts).post(create_concept))
        .route("/concepts/{id}", put(update_concept))
        .route("/concepts/compare", post(compare_concepts))
        .route("/discovery", post(start_discovery))
        .route("/discovery/status", get(discovery_status));
    Router::new().nest("/api/v1", api).with_state(engine)
}

async fn summary(State(e): Shared) -> impl IntoResponse {
    Json(e.summary())
}

async fn rules(State(e): Shared, q: Result<Query<RuleFilter>, QueryRejection>) -> Reply<impl Serialize> {
    Ok(Json(e.rules(&q?.0)?))
}

async fn evaluate(State(e): Shared, body: Result<Json<RuleDraft>, JsonRejection>) -> Reply<impl Serialize> {
    Ok(Json(e.evaluate(&body?.0)?))
}

async fn documents(State(e): Shared, q: Result<Query<ConditionQuery>, QueryRejection>) -> Reply<impl Serialize> {
    let q = q?.0;
    let page = e.documents(q.conditions()?, q.page.unwrap_or(1), q.page_size.unwrap_or(DEFAULT_PAGE_SIZE))?;
    Ok(Json(page))
}

async fn overall(State(e): Shared) -> Reply<impl Serialize> {
    Ok(Json(e.overall()?))
}

async fn subpopulation(State(e): Shared, q: Result<Query<ConditionQuery>, QueryRejection>) -> Reply<impl Serialize> {
    Ok(Json(e.subpopulation(q?.0.conditions()?)?))
}

async fn projection(State(e): Shared, q: Result<Query<ConditionQuery>, QueryRejection>) -> Reply<impl Serialize> {
    Ok(Json(e.projection(q?.0.conditions()?)?))
}

async fn list_concepts(State(e): Shared) -> impl IntoResponse {
    Json(e.concepts())
}

async fn create_concept(
    State(e): Shared,
    body: Result<Json<ConceptDraft>, JsonRejection>,
) -> Result<impl IntoResponse, ApiError> {
    Ok((StatusCode::CREATED, Json(e.create_concept(&body?.0)?)))
}

async fn update_concept(
    State(e): Shared,
    Path(id): Path<u32>,
    body: Result<Json<ConceptDraft>, JsonRejection>,
) -> Reply<impl Serialize> {
    Ok(Json(e.update_concept(id, &body?.0)?))
}

async fn compare_concepts(State(e): Shared, body: Result<Json<CompareRequest>, JsonRejection>) -> Reply<impl Serialize> {
    Ok(Json(e.compare_concepts(&body?.0.ids)?))
}

async fn discovery_status(State(e): Shared) -> impl IntoResponse {
    Json(e.discovery_status())
}

/// Starts a background run; poll `GET /discovery/status` for the outcome.
async fn start_discovery(
    State(e): Shared,
    body: Result<Json<DiscoveryConfig>, JsonRejection>,
) -> Result<impl IntoResponse, ApiError> {
    e.start_discovery(body?.0)?;
    Ok((StatusCode::ACCEPTED, Json(e.discovery_status())))
}
