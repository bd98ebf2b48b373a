//! REST gateway over a [`Platform`]. Every response body is the JSON
//! serialization of the corresponding in-process call.

use std::collections::HashMap;
use std::future::Future;
use std::net::SocketAddr;
use std::str::FromStr;
use std::sync::Arc;

use axum::extract::rejection::JsonRejection;
use axum::extract::{Path, Query, State};
use axum::http::{HeaderValue, Method, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::Serialize;
use tokio::net::TcpListener;
use tower_http::cors::{AllowOrigin, Any, CorsLayer};

use smartcity_core::incident::TextReport;
use smartcity_core::parking::ParkingEvent;
use smartcity_core::platform::{ApiError, ErrorCode, Platform};
use smartcity_core::route::DEFAULT_K;

pub mod commands;

/// Wrapper turning an [`ApiError`] into an HTTP response.
#[derive(Debug)]
pub struct HttpError(pub ApiError);

impl From<ApiError> for HttpError {
    fn from(e: ApiError) -> Self {
        HttpError(e)
    }
}

impl IntoResponse for HttpError {
    fn into_response(self) -> Response {
        let status =
            StatusCode::from_u16(self.0.http_status).unwrap_or(StatusCode::INTERNAL_SERVER_ERROR);
        (status, Json(self.0)).into_response()
    }
}

type Reply<T> = Result<Json<T>, HttpError>;
type Params = Query<HashMap<String, String>>;

fn param<T: FromStr>(params: &HashMap<String, String>, name: &str) -> Result<T, ApiError>
where
    T::Err: std::fmt::Display,
{
    let raw = params
        .get(name)
        .ok_or_else(|| ApiError::invalid(name, "missing query parameter"))?;
    raw.parse()
        .map_err(|e| ApiError::invalid(name, format!("{raw:?}: {e}")))
}

fn optional<T: FromStr>(params: &HashMap<String, String>, name: &str) -> Result<Option<T>, ApiError>
where
    T::Err: std::fmt::Display,
{
    params.contains_key(name).then(|| param(params, name)).transpose()
}

fn body<T>(payload: Result<Json<T>, JsonRejection>) -> Result<T, ApiError> {
    payload
        .map(|Json(v)| v)
        .map_err(|e| ApiError::new(ErrorCode::BadRequest, e.body_text()))
}

async fn health(State(p): State<Arc<Platform>>) -> impl IntoResponse {
    Json(p.health())
}

async fn blocks(State(p): State<Arc<Platform>>) -> impl IntoResponse {
    Json(p.blocks())
}

async fn block(State(p): State<Arc<Platform>>, Path(id): Path<String>) -> Reply<impl Serialize> {
    Ok(Json(p.block(&id)?))
}

async fn active_incidents(State(p): State<Arc<Platform>>, Query(q): Params) -> Reply<impl Serialize> {
    let t: i64 = param(&q, "t")?;
    Ok(Json(p.active_incidents(t)))
}

async fn ranking(State(p): State<Arc<Platform>>, Query(q): Params) -> Reply<impl Serialize> {
    let x: f64 = param(&q, "x")?;
    let y: f64 = param(&q, "y")?;
    let radius: f64 = param(&q, "radius")?;
    let t: i64 = param(&q, "t")?;
    Ok(Json(p.ranking(x, y, radius, t)?))
}

async fn routes(State(p): State<Arc<Platform>>, Query(q): Params) -> Reply<impl Serialize> {
    let from: String = param(&q, "from")?;
    let to: String = param(&q, "to")?;
    let t: i64 = param(&q, "t")?;
    let k: usize = optional(&q, "k")?.unwrap_or(DEFAULT_K);
    Ok(Json(p.routes(&from, &to, t, k)?))
}

async fn post_report(
    State(p): State<Arc<Platform>>,
    payload: Result<Json<TextReport>, JsonRejection>,
) -> Reply<impl Serialize> {
    let report = body(payload)?;
    Ok(Json(p.submit_report(&report)?))
}

async fn post_parking_event(
    State(p): State<Arc<Platform>>,
    payload: Result<Json<ParkingEvent>, JsonRejection>,
) -> Reply<impl Serialize> {
    let event = body(payload)?;
    Ok(Json(p.submit_parking_event(&event)?))
}

async fn not_found() -> HttpError {
    ApiError::new(ErrorCode::NotFound, "no such endpoint").into()
}

async fn method_not_allowed() -> HttpError {
    ApiError::new(ErrorCode::MethodNotAllowed, "method not allowed for this endpoint").into()
}

fn cors(origins: &[String]) -> CorsLayer {
    let layer = CorsLayer::new()
        .allow_methods([Method::GET, Method::POST])
        .allow_headers(Any);
    if origins.is_empty() || origins.iter().any(|o| o == "*") {
        return layer.allow_origin(Any);
    }
    let list: Vec<HeaderValue> = origins.iter().filter_map(|o| o.parse().ok()).collect();
    layer.allow_origin(AllowOrigin::list(list))
}

pub fn router(platform: Arc<Platform>, cors_origins: &[String]) -> Router {
    Router::new()
        .route("/health", get(health))
        .route("/blocks", get(blocks))
        .route("/blocks/{id}", get(block))
        .route("/incidents/active", get(active_incidents))
        .route("/parking/ranking", get(ranking))
        .route("/parking/events", post(post_parking_event))
        .route("/routes", get(routes))
        .route("/reports", post(post_report))
        .fallback(not_found)
        .method_not_allowed_fallback(method_not_allowed)
        .layer(cors(cors_origins))
        .with_state(platform)
}

/// Binds `addr`, failing with a diagnostic when the port is taken.
pub async fn bind(addr: &str) -> anyhow::Result<TcpListener> {
    let parsed: SocketAddr = addr
        .parse()
        .map_err(|e| anyhow::anyhow!("invalid listen address {addr:?}: {e}"))?;
    TcpListener::bind(parsed)
        .await
        .map_err(|e| anyhow::anyhow!("cannot listen on {addr}: {e}"))
}

/// Serves until `shutdown` resolves, then drains in-flight requests.
pub async fn serve(
    listener: TcpListener,
    platform: Arc<Platform>,
    cors_origins: &[String],
    shutdown: impl Future<Output = ()> + Send + 'static,
) -> anyhow::Result<()> {
    let app = router(platform, cors_origins);
    axum::serve(listener, app)
        .with_graceful_shutdown(shutdown)
        .await?;
    Ok(())
}

/// Resolves on Ctrl-C or SIGTERM.
pub async fn shutdown_signal() {
    let ctrl_c = async {
        let _ = tokio::signal::ctrl_c().await;
    };
    #[cfg(unix)]
    let term = async {
        match tokio::signal::unix::signal(tokio::signal::unix::SignalKind::terminate()) {
            Ok(mut s) => {
                s.recv().await;
            }
            Err(_) => std::future::pending::<()>().await,
        }
    };
    #[cfg(not(unix))]
    let term = std::future::pending::<()>();
    tokio::select! {
        _ = ctrl_c => {},
        _ = term => {},
    }
    tracing::info!("shutdown requested");
}
