use std::error::Error as _;
use std::sync::Arc;

use axum::body::{Body, Bytes};
use axum::extract::{DefaultBodyLimit, Multipart, Path, Query, State};
use axum::http::{header, HeaderName, HeaderValue, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use coldfaas_core::api::{self, ErrorBody, GatewayStats};
use coldfaas_core::driver::WarmInner;
use coldfaas_core::{
    DispatchError, DriverError, DriverKind, FunctionSpec, InvocationRecord, Outcome, RegistryError,
};
use http_body_util::LengthLimitError;
use serde::Deserialize;

use crate::Platform;

pub fn router(platform: Arc<Platform>) -> Router {
    let deploy_limit = platform.config.gateway.max_deploy_bytes;
    Router::new()
        .route("/invoke/{name}", post(invoke))
        .route("/noop", get(noop).post(noop))
        .route(
            "/deploy",
            post(deploy).layer(DefaultBodyLimit::max(deploy_limit)),
        )
        .route("/waste", get(waste))
        .route("/stats", get(stats))
        .route("/sizes", get(sizes))
        .fallback(|| async { ApiError::new(StatusCode::NOT_FOUND, "not_found", "no such route") })
        .with_state(platform)
}

#[derive(Debug)]
struct ApiError {
    status: StatusCode,
    body: ErrorBody,
}

impl ApiError {
    fn new(status: StatusCode, error: &str, detail: impl Into<String>) -> Self {
        ApiError {
            status,
            body: ErrorBody {
                error: error.to_owned(),
                detail: detail.into(),
            },
        }
    }

    fn internal(detail: impl std::fmt::Display) -> Self {
        ApiError::new(
            StatusCode::INTERNAL_SERVER_ERROR,
            "internal",
            detail.to_string(),
        )
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(self.body)).into_response()
    }
}

impl From<DispatchError> for ApiError {
    fn from(e: DispatchError) -> Self {
        let detail = e.to_string();
        match e {
            DispatchError::NotFound(_) => ApiError::new(StatusCode::NOT_FOUND, "not_found", detail),
            DispatchError::Driver(DriverError::PayloadTooLarge { .. }) => {
                ApiError::new(StatusCode::PAYLOAD_TOO_LARGE, "payload_too_large", detail)
            }
            DispatchError::Driver(_) => {
                ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "driver_error", detail)
            }
            DispatchError::Registry(_) => {
                ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "registry_error", detail)
            }
            DispatchError::Config(_) => ApiError::internal(detail),
        }
    }
}

fn set_header(resp: &mut Response, name: &'static str, value: impl ToString) {
    let value = HeaderValue::from_str(&value.to_string()).expect("numeric header value");
    resp.headers_mut()
        .insert(HeaderName::from_static(name), value);
}

fn timed(mut resp: Response, record: &InvocationRecord) -> Response {
    set_header(&mut resp, api::HEADER_QUEUE_WAIT, record.queue_wait_ns);
    set_header(&mut resp, api::HEADER_STARTUP, record.startup_ns);
    set_header(&mut resp, api::HEADER_EXECUTION, record.execution_ns);
    set_header(&mut resp, api::HEADER_TOTAL, record.total_ns);
    set_header(&mut resp, api::HEADER_REQUEST_ID, record.request_id);
    set_header(&mut resp, api::HEADER_OUTCOME, record.outcome.as_str());
    set_header(&mut resp, api::HEADER_WARM, record.was_warm);
    resp
}

fn outcome_response(record: &InvocationRecord, output: Vec<u8>) -> Response {
    let status = StatusCode::from_u16(api::status_of(record.outcome)).expect("valid status");
    let resp = match record.outcome {
        Outcome::Ok => (
            status,
            [(header::CONTENT_TYPE, "application/octet-stream")],
            output,
        )
            .into_response(),
        Outcome::FunctionError => {
            let detail = String::from_utf8_lossy(&output[..output.len().min(4096)]).into_owned();
            ApiError::new(status, "function_error", detail).into_response()
        }
        Outcome::Timeout => {
            ApiError::new(status, "timeout", "function exceeded its timeout").into_response()
        }
        Outcome::Rejected => {
            ApiError::new(status, "rejected", "dispatch queue is full").into_response()
        }
        Outcome::TransportError => ApiError::new(status, "transport_error", "").into_response(),
    };
    timed(resp, record)
}

fn is_length_limit(e: &axum::Error) -> bool {
    let mut source: Option<&(dyn std::error::Error + 'static)> = e.source();
    while let Some(s) = source {
        if s.is::<LengthLimitError>() {
            return true;
        }
        source = s.source();
    }
    false
}

async fn invoke(State(p): State<Arc<Platform>>, Path(name): Path<String>, body: Body) -> Response {
    let arrival = p.dispatcher.clock().now();
    let limit = p.config.gateway.max_body_bytes;
    let payload = match axum::body::to_bytes(body, limit).await {
        Ok(b) => b,
        Err(e) if is_length_limit(&e) => {
            return ApiError::new(
                StatusCode::PAYLOAD_TOO_LARGE,
                "payload_too_large",
                format!("payload exceeds {limit} bytes"),
            )
            .into_response()
        }
        Err(e) => {
            return ApiError::new(StatusCode::BAD_REQUEST, "bad_request", e.to_string())
                .into_response()
        }
    };
    // dispatch holds a worker slot across awaits; run it to completion even if the client leaves
    let d = p.dispatcher.clone();
    let joined = tokio::spawn(async move { d.dispatch(&name, &payload, arrival).await }).await;
    match joined {
        Ok(Ok(inv)) => outcome_response(&inv.record, inv.output),
        Ok(Err(e)) => ApiError::from(e).into_response(),
        Err(e) => ApiError::internal(e).into_response(),
    }
}

async fn noop(State(p): State<Arc<Platform>>) -> Response {
    let arrival = p.dispatcher.clock().now();
    let d = p.dispatcher.clone();
    match tokio::spawn(async move { d.noop(arrival).await }).await {
        Ok(record) => outcome_response(&record, Vec::new()),
        Err(e) => ApiError::internal(e).into_response(),
    }
}

#[derive(Debug, Deserialize)]
struct DeployQuery {
    #[serde(default)]
    overwrite: bool,
}

fn bad_request(detail: impl Into<String>) -> ApiError {
    ApiError::new(StatusCode::BAD_REQUEST, "invalid_spec", detail)
}

/// Multipart parts: `spec` (JSON FunctionSpec) and an optional `image`.
async fn deploy(
    State(p): State<Arc<Platform>>,
    Query(q): Query<DeployQuery>,
    mut form: Multipart,
) -> Result<(StatusCode, Json<coldfaas_core::RegistryEntry>), ApiError> {
    let mut spec: Option<Bytes> = None;
    let mut image: Option<Bytes> = None;
    while let Some(field) = form
        .next_field()
        .await
        .map_err(|e| ApiError::new(e.status(), "bad_request", e.body_text()))?
    {
        let name = field.name().unwrap_or_default().to_owned();
        let bytes = field
            .bytes()
            .await
            .map_err(|e| ApiError::new(e.status(), "bad_request", e.body_text()))?;
        match name.as_str() {
            "spec" => spec = Some(bytes),
            "image" => image = Some(bytes),
            other => return Err(bad_request(format!("unexpected part {other:?}"))),
        }
    }
    let spec = spec.ok_or_else(|| bad_request("missing \"spec\" part"))?;
    let mut doc: serde_json::Value =
        serde_json::from_slice(&spec).map_err(|e| bad_request(format!("spec is not JSON: {e}")))?;
    if let Some(obj) = doc.as_object_mut() {
        obj.entry("timeout_ms")
            .or_insert(p.config.dispatcher.default_timeout_ms.into());
    }
    let spec: FunctionSpec = serde_json::from_value(doc).map_err(|e| bad_request(e.to_string()))?;

    let drivers = p.dispatcher.drivers();
    if let Some(profile) = &spec.profile_name {
        drivers
            .simulated
            .profile(profile)
            .map_err(|e| bad_request(e.to_string()))?;
    }
    if spec.driver == DriverKind::Warmpool {
        match (&drivers.warmpool.config().inner, image.is_some()) {
            (WarmInner::Process, false) => {
                return Err(bad_request(
                    "warm pool runs processes here; an image is required",
                ))
            }
            (WarmInner::Simulated { .. }, true) => {
                return Err(bad_request(
                    "warm pool simulates executors here; no image is accepted",
                ))
            }
            _ => {}
        }
    }

    let registry = p.dispatcher.registry().clone();
    let entry =
        tokio::task::spawn_blocking(move || registry.put(spec, image.as_deref(), q.overwrite))
            .await
            .map_err(ApiError::internal)?
            .map_err(|e| {
                let detail = e.to_string();
                match e {
                    RegistryError::Exists(_) => {
                        ApiError::new(StatusCode::CONFLICT, "exists", detail)
                    }
                    RegistryError::InvalidSpec(_) => bad_request(detail),
                    _ => ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "registry_error", detail),
                }
            })?;
    tracing::info!(name = %entry.spec.name, version = entry.version, "deployed");
    Ok((StatusCode::CREATED, Json(entry)))
}

async fn waste(State(p): State<Arc<Platform>>) -> Json<coldfaas_core::driver::WasteLedger> {
    Json(p.dispatcher.drivers().warmpool.ledger_now())
}

async fn stats(State(p): State<Arc<Platform>>) -> Json<GatewayStats> {
    Json(GatewayStats {
        dispatcher: p.dispatcher.stats_snapshot(),
        live_executors: p.dispatcher.drivers().live_executors(),
    })
}

async fn sizes(State(p): State<Arc<Platform>>) -> Json<Vec<coldfaas_core::registry::SizeEntry>> {
    Json(p.dispatcher.registry().report_sizes())
}
