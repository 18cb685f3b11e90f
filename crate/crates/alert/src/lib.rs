//! Deterministic simulator of the mobile seizure-alert pipeline.
//!
//! Everything runs against a virtual clock, so five-minute thresholds and
//! duty cycles are testable in milliseconds and two runs of the same
//! scenario produce byte-identical notification logs. Notifications are
//! recorded, never sent: the SMS/email/hospital adapters are logging
//! implementations behind one interface. Completed seizure episodes are
//! posted to the inference service's patient-history endpoint, or queued
//! when the service is unreachable and delivered on reconnect.

mod clock;
mod contacts;
mod fsm;
mod scenario;
mod sink;

pub use clock::{ClockError, VirtualClock};
pub use contacts::{Contact, ContactBook, ContactError, Role};
pub use fsm::{
    AlertFsm, AlertState, Channel, FsmError, LocationInfo, LocationProviders, NotificationRecord,
    Phase, PredictedClass, HOSPITAL_THRESHOLD_SECONDS,
};
pub use scenario::{
    parse_script, run_scenario, schedule_windows, write_notification_log, HttpPredictor,
    Predictor, ScenarioConfig, ScenarioError, ScenarioOutcome, ScriptCommand,
};
pub use sink::{Delivery, EventSink, HttpEventSink, MemoryEventSink, QueueOnlySink};
