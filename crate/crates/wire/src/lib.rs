//! JSON wire types shared by the inference service, the load harness, and
//! the alert simulator.
//!
//! Field names are part of the HTTP contract and must not change:
//! `/predict` takes `{"data": [178 numbers]}` and answers with
//! `label_index`, `label`, `probabilities`, `model_digest`, and
//! `processing_ms`.

use serde::{Deserialize, Serialize};

/// Number of samples a prediction request must carry.
pub const WINDOW_LEN: usize = 178;

/// Body of `POST /predict`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PredictRequest {
    pub data: Vec<f64>,
}

/// Successful `/predict` answer. `label_index` is the argmax of
/// `probabilities` (ties toward the lowest index) and the probabilities
/// sum to one.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PredictResponse {
    pub label_index: usize,
    pub label: String,
    pub probabilities: Vec<f64>,
    pub model_digest: String,
    pub processing_ms: f64,
}

/// Error payload used by every non-2xx response.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub error: String,
}

/// `GET /health` answer. `status` is `"ok"` once a checkpoint is loaded,
/// `"degraded"` before that.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HealthResponse {
    pub status: String,
    pub model_digest: Option<String>,
    pub group_mode: Option<String>,
    pub class_names: Option<Vec<String>>,
    pub uptime_seconds: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EventKind {
    PreIctalAlarm,
    Ictal,
    HospitalAlert,
}

impl EventKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            EventKind::PreIctalAlarm => "pre-ictal-alarm",
            EventKind::Ictal => "ictal",
            EventKind::HospitalAlert => "hospital-alert",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LocationSource {
    Network,
    Gps,
}

/// A geographic fix. `stale` marks a last-known position reused because no
/// provider currently answers.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeoFix {
    pub lat: f64,
    pub lon: f64,
    pub source: LocationSource,
    #[serde(default)]
    pub stale: bool,
}

/// Body of `POST /patients/{id}/events`. `duration_seconds` is present
/// exactly when `kind` is `ictal`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeizureEvent {
    pub kind: EventKind,
    /// Seconds; monotone within one patient's stream.
    pub timestamp: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub location: Option<GeoFix>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub duration_seconds: Option<u64>,
    /// Class-probability snapshot at the triggering prediction, when known.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub probabilities: Option<Vec<f64>>,
}

impl SeizureEvent {
    /// The duration field is valid exactly for ictal events.
    pub fn duration_field_valid(&self) -> bool {
        (self.kind == EventKind::Ictal) == self.duration_seconds.is_some()
    }
}

/// Answer to a stored event.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EventAccepted {
    pub id: u64,
}

/// An event as returned by `GET /patients/{id}/events`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StoredEvent {
    pub id: u64,
    pub patient_id: String,
    #[serde(flatten)]
    pub event: SeizureEvent,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn event_kind_wire_names_are_kebab_case() {
        assert_eq!(
            serde_json::to_string(&EventKind::PreIctalAlarm).unwrap(),
            "\"pre-ictal-alarm\""
        );
        assert_eq!(
            serde_json::to_string(&EventKind::HospitalAlert).unwrap(),
            "\"hospital-alert\""
        );
        let k: EventKind = serde_json::from_str("\"ictal\"").unwrap();
        assert_eq!(k, EventKind::Ictal);
    }

    #[test]
    fn duration_validity_rule() {
        let mut ev = SeizureEvent {
            kind: EventKind::Ictal,
            timestamp: 10,
            location: None,
            duration_seconds: Some(42),
            probabilities: None,
        };
        assert!(ev.duration_field_valid());
        ev.duration_seconds = None;
        assert!(!ev.duration_field_valid());
        ev.kind = EventKind::PreIctalAlarm;
        assert!(ev.duration_field_valid());
        ev.duration_seconds = Some(1);
        assert!(!ev.duration_field_valid());
    }

    #[test]
    fn stored_event_flattens_the_event_fields() {
        let stored = StoredEvent {
            id: 7,
            patient_id: "p1".into(),
            event: SeizureEvent {
                kind: EventKind::Ictal,
                timestamp: 99,
                location: Some(GeoFix {
                    lat: 1.5,
                    lon: 2.5,
                    source: LocationSource::Network,
                    stale: false,
                }),
                duration_seconds: Some(301),
                probabilities: None,
            },
        };
        let json = serde_json::to_value(&stored).unwrap();
        assert_eq!(json["id"], 7);
        assert_eq!(json["kind"], "ictal");
        assert_eq!(json["duration_seconds"], 301);
        assert_eq!(json["location"]["source"], "network");
    }
}
