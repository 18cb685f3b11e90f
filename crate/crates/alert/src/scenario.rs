//! Line-oriented scenario scripts and their deterministic execution.
//!
//! Script grammar, one command per line (`#` starts a comment):
//!
//! ```text
//! start
//! stop
//! at <seconds> inject <healthy|pre-ictal|ictal|inter-ictal>
//! at <seconds> window <row-index>
//! net-loc <on|off>
//! gps <on|off>
//! ```
//!
//! Explicit `at` times must be non-decreasing in script order. Untimed
//! commands execute at the time of the preceding timed command. `window`
//! submissions pass through the duty cycle: the device is active only
//! during the first minute of each five-minute slot, so a window arriving
//! outside an active minute is deferred to the next slot start.

use std::fs;
use std::path::Path;
use std::time::Duration;

use thiserror::Error;

use epilnet_wire::{PredictRequest, PredictResponse};

use crate::clock::VirtualClock;
use crate::contacts::ContactBook;
use crate::fsm::{AlertFsm, LocationProviders, NotificationRecord, Phase, PredictedClass};
use crate::sink::{Delivery, EventSink};

/// Duty cycle: one active minute per five-minute slot.
const SLOT_SECONDS: u64 = 300;
const ACTIVE_SECONDS: u64 = 60;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("script line {line}: {reason}")]
    Parse { line: usize, reason: String },
    #[error("script line {line}: time moves backwards (at {at} after {previous})")]
    TimeBackwards { line: usize, at: u64, previous: u64 },
    #[error("script uses `window` but no window source was provided")]
    NoWindows,
    #[error("window row {row} out of range ({count} windows available)")]
    WindowOutOfRange { row: usize, count: usize },
    #[error("script uses `window` but no predictor was provided")]
    NoPredictor,
    #[error("predictor failed: {reason}")]
    Predictor { reason: String },
    #[error("predictor returned unknown label {label:?}")]
    UnknownLabel { label: String },
    #[error("prediction at t={at} before the service was started")]
    PredictionBeforeStart { at: u64 },
    #[error("failed to start the service: {0}")]
    Start(#[from] crate::fsm::FsmError),
    #[error("failed to write {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ScriptCommand {
    Start,
    Stop,
    Inject { at: u64, class: PredictedClass },
    Window { at: u64, row: usize },
    NetLoc(bool),
    Gps(bool),
}

/// Parse a script, reporting the first malformed line.
pub fn parse_script(text: &str) -> Result<Vec<(usize, ScriptCommand)>, ScenarioError> {
    let mut commands = Vec::new();
    let mut previous_at = 0u64;
    for (line_no, raw) in text.lines().enumerate() {
        let line_no = line_no + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let tokens: Vec<&str> = line.split_whitespace().collect();
        let parse_err = |reason: String| ScenarioError::Parse {
            line: line_no,
            reason,
        };

        let command = match tokens.as_slice() {
            ["start"] => ScriptCommand::Start,
            ["stop"] => ScriptCommand::Stop,
            ["net-loc", flag] => ScriptCommand::NetLoc(parse_switch(flag).map_err(parse_err)?),
            ["gps", flag] => ScriptCommand::Gps(parse_switch(flag).map_err(parse_err)?),
            ["at", at, "inject", class] => {
                let at: u64 = at
                    .parse()
                    .map_err(|_| parse_err(format!("non-numeric time {at:?}")))?;
                let class = PredictedClass::from_label_name(class)
                    .ok_or_else(|| parse_err(format!("unknown class {class:?}")))?;
                if at < previous_at {
                    return Err(ScenarioError::TimeBackwards {
                        line: line_no,
                        at,
                        previous: previous_at,
                    });
                }
                previous_at = at;
                ScriptCommand::Inject { at, class }
            }
            ["at", at, "window", row] => {
                let at: u64 = at
                    .parse()
                    .map_err(|_| parse_err(format!("non-numeric time {at:?}")))?;
                let row: usize = row
                    .parse()
                    .map_err(|_| parse_err(format!("non-numeric row {row:?}")))?;
                if at < previous_at {
                    return Err(ScenarioError::TimeBackwards {
                        line: line_no,
                        at,
                        previous: previous_at,
                    });
                }
                previous_at = at;
                ScriptCommand::Window { at, row }
            }
            _ => return Err(parse_err(format!("unrecognized command {line:?}"))),
        };
        commands.push((line_no, command));
    }
    Ok(commands)
}

fn parse_switch(flag: &str) -> Result<bool, String> {
    match flag {
        "on" => Ok(true),
        "off" => Ok(false),
        other => Err(format!("expected on|off, got {other:?}")),
    }
}

/// Duty-cycled submission time for a window arriving at `t`: unchanged
/// inside an active minute, otherwise the next slot start.
pub fn duty_cycle_submit_time(t: u64) -> u64 {
    if t % SLOT_SECONDS < ACTIVE_SECONDS {
        t
    } else {
        (t / SLOT_SECONDS + 1) * SLOT_SECONDS
    }
}

/// Apply the duty cycle to a stream of timed window arrivals.
pub fn schedule_windows<T: Clone>(arrivals: &[(u64, T)]) -> Vec<(u64, T)> {
    let mut out: Vec<(u64, T)> = arrivals
        .iter()
        .map(|(t, w)| (duty_cycle_submit_time(*t), w.clone()))
        .collect();
    out.sort_by_key(|(t, _)| *t);
    out
}

/// Something that can classify one 178-sample window.
pub trait Predictor {
    fn predict(&mut self, window: &[f32]) -> Result<(String, Vec<f64>), ScenarioError>;
}

/// Classifies via the live service's `/predict` endpoint.
pub struct HttpPredictor {
    url: String,
    client: reqwest::blocking::Client,
}

impl HttpPredictor {
    pub fn new(base_url: impl Into<String>) -> Self {
        Self {
            url: base_url.into(),
            client: reqwest::blocking::Client::builder()
                .timeout(Duration::from_secs(30))
                .build()
                .expect("client builds"),
        }
    }
}

impl Predictor for HttpPredictor {
    fn predict(&mut self, window: &[f32]) -> Result<(String, Vec<f64>), ScenarioError> {
        let request = PredictRequest {
            data: window.iter().map(|&v| v as f64).collect(),
        };
        let resp = self
            .client
            .post(format!("{}/predict", self.url.trim_end_matches('/')))
            .json(&request)
            .send()
            .map_err(|e| ScenarioError::Predictor {
                reason: e.to_string(),
            })?;
        if !resp.status().is_success() {
            return Err(ScenarioError::Predictor {
                reason: format!("service answered {}", resp.status()),
            });
        }
        let body: PredictResponse = resp.json().map_err(|e| ScenarioError::Predictor {
            reason: e.to_string(),
        })?;
        Ok((body.label, body.probabilities))
    }
}

#[derive(Clone, Debug)]
pub struct ScenarioConfig {
    pub patient_id: String,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            patient_id: "patient-0".to_owned(),
        }
    }
}

#[derive(Debug)]
pub struct ScenarioOutcome {
    pub notifications: Vec<NotificationRecord>,
    pub final_phase: Phase,
    pub stored_events: u64,
    pub queued_events: u64,
    /// Window submissions deferred past a `stop` and therefore never
    /// classified.
    pub dropped_predictions: u64,
    pub final_time: u64,
}

/// Execute a parsed or textual scenario. Fully deterministic: the
/// notification log depends only on the script, the contacts, the provider
/// state, and the model behind the predictor.
pub fn run_scenario(
    script: &str,
    contacts: &ContactBook,
    mut providers: LocationProviders,
    sink: &mut dyn EventSink,
    mut predictor: Option<&mut dyn Predictor>,
    windows: Option<&[[f32; 178]]>,
    config: &ScenarioConfig,
) -> Result<ScenarioOutcome, ScenarioError> {
    let commands = parse_script(script)?;

    // Assign execution times: explicit for inject, duty-cycled for window,
    // inherited from the preceding timed command for the rest. A stable
    // sort then yields the discrete-event order.
    let mut timed: Vec<(u64, usize, ScriptCommand)> = Vec::with_capacity(commands.len());
    let mut cursor = 0u64;
    for (line, command) in commands {
        let time = match &command {
            ScriptCommand::Inject { at, .. } => {
                cursor = *at;
                *at
            }
            ScriptCommand::Window { at, .. } => {
                cursor = *at;
                duty_cycle_submit_time(*at)
            }
            _ => cursor,
        };
        timed.push((time, line, command));
    }
    timed.sort_by_key(|(time, line, _)| (*time, *line));

    let mut clock = VirtualClock::new();
    let mut fsm = AlertFsm::new();
    let mut notifications = Vec::new();
    let mut stored = 0u64;
    let mut queued = 0u64;
    let mut dropped = 0u64;

    let mut deliver = |sink: &mut dyn EventSink, event: epilnet_wire::SeizureEvent| {
        match sink.deliver(&config.patient_id, &event) {
            Delivery::Stored { .. } => stored += 1,
            Delivery::Queued => queued += 1,
        }
    };

    for (time, _line, command) in timed {
        clock.advance_to(time).expect("events sorted by time");
        match command {
            ScriptCommand::Start => {
                fsm.start(contacts)?;
            }
            ScriptCommand::Stop => {
                if let Some(event) = fsm.stop(clock.now()) {
                    deliver(sink, event);
                }
            }
            ScriptCommand::NetLoc(up) => providers.network_up = up,
            ScriptCommand::Gps(up) => providers.gps_up = up,
            ScriptCommand::Inject { class, .. } => {
                if fsm.state().phase == Phase::Stopped {
                    dropped += 1;
                    continue;
                }
                if !fsm.is_started() {
                    return Err(ScenarioError::PredictionBeforeStart { at: clock.now() });
                }
                let (mut batch, flushed) = fsm
                    .on_prediction(class, clock.now(), contacts, &mut providers, None)
                    .expect("started state checked above");
                notifications.append(&mut batch);
                if let Some(event) = flushed {
                    deliver(sink, event);
                }
            }
            ScriptCommand::Window { row, .. } => {
                if fsm.state().phase == Phase::Stopped {
                    dropped += 1;
                    continue;
                }
                if !fsm.is_started() {
                    return Err(ScenarioError::PredictionBeforeStart { at: clock.now() });
                }
                let windows = windows.ok_or(ScenarioError::NoWindows)?;
                let window = windows.get(row).ok_or(ScenarioError::WindowOutOfRange {
                    row,
                    count: windows.len(),
                })?;
                let predictor = predictor.as_deref_mut().ok_or(ScenarioError::NoPredictor)?;
                let (label, probabilities) = predictor.predict(window)?;
                let class = PredictedClass::from_label_name(&label)
                    .ok_or(ScenarioError::UnknownLabel { label })?;
                let (mut batch, flushed) = fsm
                    .on_prediction(
                        class,
                        clock.now(),
                        contacts,
                        &mut providers,
                        Some(probabilities),
                    )
                    .expect("started state checked above");
                notifications.append(&mut batch);
                if let Some(event) = flushed {
                    deliver(sink, event);
                }
            }
        }
    }

    Ok(ScenarioOutcome {
        notifications,
        final_phase: fsm.state().phase,
        stored_events: stored,
        queued_events: queued,
        dropped_predictions: dropped,
        final_time: clock.now(),
    })
}

/// Persist the notification log as JSON lines, one record per line.
pub fn write_notification_log(
    path: impl AsRef<Path>,
    notifications: &[NotificationRecord],
) -> Result<(), ScenarioError> {
    let path = path.as_ref();
    let mut out = String::new();
    for n in notifications {
        out.push_str(&serde_json::to_string(n).expect("notifications serialize"));
        out.push('\n');
    }
    fs::write(path, out).map_err(|source| ScenarioError::Io {
        path: path.display().to_string(),
        source,
    })
}
