//! Stateless JSON-over-HTTP facade over the optimizer, factor curves and
//! simulator.
//!
//! Every response is an [`ApiEnvelope`] carrying a fresh request id and
//! exactly one of `payload` or `error`. Handlers hold no shared state, so
//! repeating a request yields the same body apart from the id.

use axum::body::Bytes;
use axum::extract::rejection::QueryRejection;
use axum::extract::Query;
use axum::http::{HeaderValue, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use mvu_core::config::{
    parse_document, run_optimize, ConfigError, OptimizeReport, RunConfigDocument, RunError,
};
use mvu_core::curves::{
    self, AFactorPoint, CorrRatioPoint, CurveError, DEFAULT_ALPHA_RANGE, DEFAULT_CORR_N,
};
use mvu_core::factors::CorrBranch;
use mvu_core::optimizer::OptimizeError;
use mvu_core::simulator::{run_experiment, ExperimentReport, SimulationError};
use serde::{Deserialize, Serialize};
use tower_http::cors::CorsLayer;
use uuid::Uuid;

/// Largest `steps` accepted by `/v1/experiment`.
pub const MAX_EXPERIMENT_STEPS: u64 = 200_000;
/// Largest `points` accepted by the curve endpoints.
pub const MAX_CURVE_POINTS: usize = 2_000;

pub const DEFAULT_A_RANGE: (f64, f64) = (0.05, 5.0);
pub const DEFAULT_CURVE_POINTS: usize = 100;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApiEnvelope<T> {
    pub request_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub payload: Option<T>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<ApiError>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApiError {
    pub code: String,
    pub message: String,
    /// Offending field in the request, empty when not tied to one.
    pub path: String,
}

/// A failed request: status plus the error body.
#[derive(Debug)]
pub struct Failure {
    status: StatusCode,
    error: ApiError,
}

impl Failure {
    fn new(
        status: StatusCode,
        code: &str,
        message: impl Into<String>,
        path: impl Into<String>,
    ) -> Self {
        Self {
            status,
            error: ApiError {
                code: code.into(),
                message: message.into(),
                path: path.into(),
            },
        }
    }
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::new(
            StatusCode::BAD_REQUEST,
            "invalid_document",
            e.message,
            e.path,
        )
    }
}

impl From<OptimizeError> for Failure {
    fn from(e: OptimizeError) -> Self {
        match e {
            OptimizeError::NotPositiveDefinite | OptimizeError::Singular { .. } => Failure::new(
                StatusCode::UNPROCESSABLE_ENTITY,
                "no_unique_maximum",
                e.to_string(),
                "",
            ),
            other => Failure::new(
                StatusCode::BAD_REQUEST,
                "invalid_document",
                other.to_string(),
                "",
            ),
        }
    }
}

impl From<RunError> for Failure {
    fn from(e: RunError) -> Self {
        match e {
            RunError::Config(c) => c.into(),
            RunError::Optimize(o) => o.into(),
        }
    }
}

impl From<SimulationError> for Failure {
    fn from(e: SimulationError) -> Self {
        let message = e.to_string();
        match e {
            SimulationError::InvalidConfig(_) => Failure::new(
                StatusCode::BAD_REQUEST,
                "invalid_document",
                message,
                "experiment",
            ),
            SimulationError::Allocation {
                source: OptimizeError::NotPositiveDefinite | OptimizeError::Singular { .. },
                ..
            } => Failure::new(
                StatusCode::UNPROCESSABLE_ENTITY,
                "no_unique_maximum",
                message,
                "",
            ),
            SimulationError::DegenerateSeries { .. } => Failure::new(
                StatusCode::UNPROCESSABLE_ENTITY,
                "degenerate_series",
                message,
                "experiment.steps",
            ),
            _ => Failure::new(
                StatusCode::UNPROCESSABLE_ENTITY,
                "simulation_failed",
                message,
                "",
            ),
        }
    }
}

fn curve_failure(e: CurveError, path: &str) -> Failure {
    Failure::new(
        StatusCode::BAD_REQUEST,
        "invalid_range",
        e.to_string(),
        path,
    )
}

/// Wraps a handler result in an envelope with a new request id.
struct Reply<T>(Result<T, Failure>);

impl<T: Serialize> IntoResponse for Reply<T> {
    fn into_response(self) -> Response {
        let request_id = Uuid::new_v4().to_string();
        let (status, envelope) = match self.0 {
            Ok(payload) => (
                StatusCode::OK,
                ApiEnvelope {
                    request_id: request_id.clone(),
                    payload: Some(payload),
                    error: None,
                },
            ),
            Err(f) => {
                tracing::debug!(
                    request_id,
                    code = f.error.code,
                    path = f.error.path,
                    "request rejected"
                );
                (
                    f.status,
                    ApiEnvelope {
                        request_id: request_id.clone(),
                        payload: None,
                        error: Some(f.error),
                    },
                )
            }
        };
        let mut response = (status, Json(envelope)).into_response();
        if let Ok(v) = HeaderValue::from_str(&request_id) {
            response.headers_mut().insert("x-request-id", v);
        }
        response
    }
}

pub fn router(cors: bool) -> Router {
    let app = Router::new()
        .route("/v1/health", get(health))
        .route("/v1/optimize", post(optimize))
        .route("/v1/experiment", post(experiment))
        .route("/v1/curves/a-factor", get(a_factor))
        .route("/v1/curves/corr-ratio", get(corr_ratio));
    if cors {
        app.layer(CorsLayer::permissive())
    } else {
        app
    }
}

async fn health() -> Json<serde_json::Value> {
    Json(serde_json::json!({"status": "ok"}))
}

fn document(body: &Bytes) -> Result<RunConfigDocument, Failure> {
    let text = std::str::from_utf8(body).map_err(|e| {
        Failure::new(
            StatusCode::BAD_REQUEST,
            "invalid_document",
            format!("body is not UTF-8: {e}"),
            "",
        )
    })?;
    Ok(parse_document(text)?)
}

async fn optimize(body: Bytes) -> Reply<OptimizeReport> {
    Reply(document(&body).and_then(|doc| run_optimize(&doc).map_err(Failure::from)))
}

async fn experiment(body: Bytes) -> Reply<ExperimentReport> {
    Reply(experiment_report(body).await)
}

async fn experiment_report(body: Bytes) -> Result<ExperimentReport, Failure> {
    let cfg = document(&body)?.experiment_config()?;
    if cfg.steps > MAX_EXPERIMENT_STEPS {
        return Err(Failure::new(
            StatusCode::PAYLOAD_TOO_LARGE,
            "steps_exceed_cap",
            format!(
                "steps = {} exceeds the cap of {MAX_EXPERIMENT_STEPS}",
                cfg.steps
            ),
            "experiment.steps",
        ));
    }
    tokio::task::spawn_blocking(move || run_experiment(&cfg))
        .await
        .map_err(|e| {
            Failure::new(
                StatusCode::INTERNAL_SERVER_ERROR,
                "internal",
                e.to_string(),
                "",
            )
        })?
        .map_err(Failure::from)
}

fn check_points(points: usize) -> Result<usize, Failure> {
    if points > MAX_CURVE_POINTS {
        return Err(Failure::new(
            StatusCode::BAD_REQUEST,
            "invalid_range",
            format!("points = {points} exceeds the cap of {MAX_CURVE_POINTS}"),
            "points",
        ));
    }
    Ok(points)
}

fn query_failure(e: QueryRejection) -> Failure {
    Failure::new(StatusCode::BAD_REQUEST, "invalid_query", e.body_text(), "")
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AFactorQuery {
    pub min: Option<f64>,
    pub max: Option<f64>,
    pub points: Option<usize>,
}

async fn a_factor(query: Result<Query<AFactorQuery>, QueryRejection>) -> Reply<Vec<AFactorPoint>> {
    Reply(a_factor_points(query))
}

fn a_factor_points(
    query: Result<Query<AFactorQuery>, QueryRejection>,
) -> Result<Vec<AFactorPoint>, Failure> {
    let Query(q) = query.map_err(query_failure)?;
    let points = check_points(q.points.unwrap_or(DEFAULT_CURVE_POINTS))?;
    let (min, max) = (
        q.min.unwrap_or(DEFAULT_A_RANGE.0),
        q.max.unwrap_or(DEFAULT_A_RANGE.1),
    );
    curves::a_factor_curve(min, max, points).map_err(|e| curve_failure(e, "min"))
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SignParam {
    Plus,
    Minus,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorrRatioQuery {
    pub min: Option<f64>,
    pub max: Option<f64>,
    pub points: Option<usize>,
    pub n: Option<u32>,
    pub sign: Option<SignParam>,
}

async fn corr_ratio(
    query: Result<Query<CorrRatioQuery>, QueryRejection>,
) -> Reply<Vec<CorrRatioPoint>> {
    Reply(corr_ratio_points(query).await)
}

async fn corr_ratio_points(
    query: Result<Query<CorrRatioQuery>, QueryRejection>,
) -> Result<Vec<CorrRatioPoint>, Failure> {
    let Query(q) = query.map_err(query_failure)?;
    let points = check_points(q.points.unwrap_or(DEFAULT_CURVE_POINTS))?;
    let branch = match q.sign.unwrap_or(SignParam::Plus) {
        SignParam::Plus => CorrBranch::Plus,
        SignParam::Minus => CorrBranch::Minus,
    };
    let n = q.n.unwrap_or(DEFAULT_CORR_N);
    let (min, max) = (
        q.min.unwrap_or(DEFAULT_ALPHA_RANGE.0),
        q.max.unwrap_or(DEFAULT_ALPHA_RANGE.1),
    );
    tokio::task::spawn_blocking(move || curves::corr_ratio_curve(min, max, points, n, branch))
        .await
        .map_err(|e| {
            Failure::new(
                StatusCode::INTERNAL_SERVER_ERROR,
                "internal",
                e.to_string(),
                "",
            )
        })?
        .map_err(|e| {
            let path = if matches!(e, CurveError::Factor(_)) {
                "n"
            } else {
                "min"
            };
            curve_failure(e, path)
        })
}
