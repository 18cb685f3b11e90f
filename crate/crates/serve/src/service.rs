//! Router, handlers, and server lifecycle.

use std::net::SocketAddr;
use std::sync::{Arc, RwLock};
use std::time::{Duration, Instant};

use axum::body::Bytes;
use axum::extract::{Path, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use thiserror::Error;
use tokio::sync::oneshot;
use tower_http::timeout::TimeoutLayer;

use epilnet_core::checkpoint::{Checkpoint, CheckpointError};
use epilnet_core::model::EpilNet;
use epilnet_wire::{
    ErrorBody, EventAccepted, HealthResponse, PredictRequest, PredictResponse, SeizureEvent,
    WINDOW_LEN,
};

use crate::events::{EventStore, EventStoreError};

/// Server-side cap on request handling time.
pub const DEFAULT_REQUEST_TIMEOUT: Duration = Duration::from_secs(30);

#[derive(Debug, Error)]
pub enum ServeError {
    #[error("failed to bind {addr}: {source}")]
    Bind {
        addr: SocketAddr,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
    #[error(transparent)]
    Events(#[from] EventStoreError),
    #[error("server task failed: {0}")]
    Task(String),
}

/// A checkpointed model ready to serve: weights, normalization, digest,
/// and label names.
pub struct LoadedModel {
    pub model: EpilNet<f32>,
    pub norm: epilnet_core::data::NormStats,
    pub digest: String,
    pub class_names: Vec<String>,
    pub group_mode: String,
}

impl LoadedModel {
    pub fn from_checkpoint(ckpt: &Checkpoint) -> Result<Self, CheckpointError> {
        Ok(Self {
            model: ckpt.to_model()?,
            norm: ckpt.header.normalization,
            digest: ckpt.digest().to_owned(),
            class_names: ckpt.header.class_names.clone(),
            group_mode: ckpt.header.group_mode.to_string(),
        })
    }
}

/// Shared service state: one optional immutable model and the event store.
pub struct AppState {
    model: RwLock<Option<Arc<LoadedModel>>>,
    pub events: EventStore,
    started: Instant,
}

impl AppState {
    pub fn new(events: EventStore) -> Self {
        Self {
            model: RwLock::new(None),
            events,
            started: Instant::now(),
        }
    }

    pub fn with_model(events: EventStore, model: LoadedModel) -> Self {
        let state = Self::new(events);
        state.install_model(model);
        state
    }

    /// Swap the served model in; requests in flight keep the instance they
    /// already grabbed.
    pub fn install_model(&self, model: LoadedModel) {
        *self.model.write().expect("model lock poisoned") = Some(Arc::new(model));
    }

    pub fn model(&self) -> Option<Arc<LoadedModel>> {
        self.model.read().expect("model lock poisoned").clone()
    }
}

pub fn router(state: Arc<AppState>, request_timeout: Duration) -> Router {
    Router::new()
        .route("/predict", post(predict))
        .route("/health", get(health))
        .route("/patients/{id}/events", post(post_event).get(get_events))
        .layer(TimeoutLayer::with_status_code(
            StatusCode::REQUEST_TIMEOUT,
            request_timeout,
        ))
        .with_state(state)
}

fn error_response(status: StatusCode, message: impl Into<String>) -> Response {
    (
        status,
        Json(ErrorBody {
            error: message.into(),
        }),
    )
        .into_response()
}

async fn predict(State(state): State<Arc<AppState>>, body: Bytes) -> Response {
    let request: PredictRequest = match serde_json::from_slice(&body) {
        Ok(r) => r,
        Err(e) => {
            return error_response(
                StatusCode::BAD_REQUEST,
                format!("malformed JSON body: {e}"),
            )
        }
    };
    if request.data.len() != WINDOW_LEN {
        return error_response(
            StatusCode::BAD_REQUEST,
            format!("expected {WINDOW_LEN} samples, got {}", request.data.len()),
        );
    }
    if request.data.iter().any(|v| !v.is_finite()) {
        return error_response(
            StatusCode::BAD_REQUEST,
            "samples must all be finite numbers",
        );
    }
    let Some(loaded) = state.model() else {
        return error_response(StatusCode::SERVICE_UNAVAILABLE, "model not loaded");
    };

    let started = Instant::now();
    let window: Vec<f32> = request.data.iter().map(|&v| v as f32).collect();
    let (label_index, probabilities) = match loaded.model.predict(&window, &loaded.norm) {
        Ok(r) => r,
        Err(e) => {
            return error_response(StatusCode::INTERNAL_SERVER_ERROR, format!("inference: {e}"))
        }
    };
    let response = PredictResponse {
        label_index,
        label: loaded
            .class_names
            .get(label_index)
            .cloned()
            .unwrap_or_else(|| label_index.to_string()),
        probabilities: probabilities.into_iter().map(f64::from).collect(),
        model_digest: loaded.digest.clone(),
        processing_ms: started.elapsed().as_secs_f64() * 1e3,
    };
    (StatusCode::OK, Json(response)).into_response()
}

async fn health(State(state): State<Arc<AppState>>) -> Response {
    let model = state.model();
    let body = HealthResponse {
        status: if model.is_some() { "ok" } else { "degraded" }.to_owned(),
        model_digest: model.as_ref().map(|m| m.digest.clone()),
        group_mode: model.as_ref().map(|m| m.group_mode.clone()),
        class_names: model.as_ref().map(|m| m.class_names.clone()),
        uptime_seconds: state.started.elapsed().as_secs(),
    };
    (StatusCode::OK, Json(body)).into_response()
}

/// Patient IDs are non-empty tokens: alphanumerics plus `.`, `_`, `-`.
fn valid_patient_id(id: &str) -> bool {
    !id.is_empty()
        && id
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || matches!(c, '.' | '_' | '-'))
}

async fn post_event(
    State(state): State<Arc<AppState>>,
    Path(patient_id): Path<String>,
    body: Bytes,
) -> Response {
    if !valid_patient_id(&patient_id) {
        return error_response(
            StatusCode::BAD_REQUEST,
            format!("invalid patient id {patient_id:?}"),
        );
    }
    let event: SeizureEvent = match serde_json::from_slice(&body) {
        Ok(e) => e,
        Err(e) => {
            return error_response(
                StatusCode::BAD_REQUEST,
                format!("malformed event body: {e}"),
            )
        }
    };
    if !event.duration_field_valid() {
        return error_response(
            StatusCode::UNPROCESSABLE_ENTITY,
            format!(
                "duration_seconds must be present exactly for ictal events (kind {}, duration {:?})",
                event.kind.as_str(),
                event.duration_seconds
            ),
        );
    }
    match state.events.append(&patient_id, event) {
        Ok(id) => (StatusCode::OK, Json(EventAccepted { id })).into_response(),
        Err(e) => error_response(
            StatusCode::INTERNAL_SERVER_ERROR,
            format!("event store: {e}"),
        ),
    }
}

async fn get_events(
    State(state): State<Arc<AppState>>,
    Path(patient_id): Path<String>,
) -> Response {
    if !valid_patient_id(&patient_id) {
        return error_response(
            StatusCode::BAD_REQUEST,
            format!("invalid patient id {patient_id:?}"),
        );
    }
    (StatusCode::OK, Json(state.events.list(&patient_id))).into_response()
}

/// A running server plus its shutdown channel.
pub struct ServerHandle {
    pub addr: SocketAddr,
    shutdown: Option<oneshot::Sender<()>>,
    task: tokio::task::JoinHandle<Result<(), std::io::Error>>,
}

impl ServerHandle {
    /// Stop accepting connections and wait for in-flight requests.
    pub async fn shutdown(mut self) -> Result<(), ServeError> {
        if let Some(tx) = self.shutdown.take() {
            let _ = tx.send(());
        }
        match self.task.await {
            Ok(Ok(())) => Ok(()),
            Ok(Err(e)) => Err(ServeError::Task(e.to_string())),
            Err(e) => Err(ServeError::Task(e.to_string())),
        }
    }
}

/// Bind and start serving in a background task. Use port 0 to get an
/// ephemeral port; the actual address is on the returned handle.
pub async fn bind_and_serve(
    addr: SocketAddr,
    state: Arc<AppState>,
    request_timeout: Duration,
) -> Result<ServerHandle, ServeError> {
    let listener = tokio::net::TcpListener::bind(addr)
        .await
        .map_err(|source| ServeError::Bind { addr, source })?;
    let local = listener.local_addr().map_err(|source| ServeError::Bind { addr, source })?;
    let app = router(state, request_timeout);
    let (tx, rx) = oneshot::channel::<()>();
    let task = tokio::spawn(async move {
        axum::serve(listener, app)
            .with_graceful_shutdown(async {
                let _ = rx.await;
            })
            .await
    });
    Ok(ServerHandle {
        addr: local,
        shutdown: Some(tx),
        task,
    })
}

/// Run the service on the current thread until interrupted (CLI path).
pub fn run_blocking(
    addr: SocketAddr,
    state: Arc<AppState>,
    request_timeout: Duration,
) -> Result<(), ServeError> {
    let runtime = tokio::runtime::Runtime::new()
        .map_err(|e| ServeError::Task(format!("runtime: {e}")))?;
    runtime.block_on(async {
        let handle = bind_and_serve(addr, state, request_timeout).await?;
        println!("listening on http://{}", handle.addr);
        tokio::signal::ctrl_c()
            .await
            .map_err(|e| ServeError::Task(format!("signal: {e}")))?;
        handle.shutdown().await
    })
}
