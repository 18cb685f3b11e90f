//! Concurrent HTTP inference service.
//!
//! Endpoints:
//!
//! - `POST /predict` with `{"data": [178 numbers]}`: normalization from the
//!   loaded checkpoint, eval-mode forward pass, softmax probabilities.
//!   400 on malformed bodies or wrong lengths, 503 before a model loads.
//! - `GET /health`: `ok`/`degraded`, model digest, group mode, uptime.
//! - `POST /patients/{id}/events` and `GET /patients/{id}/events`:
//!   append-only seizure-history persistence, returned in timestamp order.
//!
//! One immutable model instance is shared by all request handlers; no
//! request can mutate parameters, so concurrent identical requests get
//! identical answers.

mod events;
mod service;

pub use events::{EventStore, EventStoreError};
pub use service::{
    bind_and_serve, router, run_blocking, AppState, LoadedModel, ServeError, ServerHandle,
    DEFAULT_REQUEST_TIMEOUT,
};
