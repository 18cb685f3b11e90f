//! Alert scenarios against a live in-process inference service: events
//! flushed by the state machine land in the patient history, and events
//! raised while the service is down are queued and delivered on reconnect.

use std::net::SocketAddr;
use std::sync::Arc;
use std::time::Duration;

use epilnet_alert::{
    run_scenario, Contact, ContactBook, EventSink, HttpEventSink, HttpPredictor,
    LocationProviders, Role, ScenarioConfig,
};
use epilnet_core::checkpoint::Checkpoint;
use epilnet_core::data::{GroupMapping, GroupMode, NormStats};
use epilnet_core::model::build_epilnet;
use epilnet_serve::{bind_and_serve, AppState, EventStore, LoadedModel, ServerHandle};
use epilnet_wire::{EventKind, SeizureEvent, StoredEvent};

fn contacts() -> ContactBook {
    let mut book = ContactBook::new();
    book.add(Contact {
        name: "ana".into(),
        phone: "+1-555-0100".into(),
        role: Role::Caretaker,
    })
    .unwrap();
    book.add(Contact {
        name: "dr-lee".into(),
        phone: "+1-555-0101".into(),
        role: Role::Doctor,
    })
    .unwrap();
    book
}

struct LiveService {
    url: String,
    runtime: tokio::runtime::Runtime,
    handle: Option<ServerHandle>,
}

impl LiveService {
    fn start(events_path: &std::path::Path) -> Self {
        let model = build_epilnet::<f32>(3, 0.0625, 5).unwrap();
        let ckpt = Checkpoint::from_model(
            &model,
            GroupMode::ThreeClass,
            GroupMapping::new(GroupMode::ThreeClass).class_names(),
            NormStats {
                mean: 0.0,
                std: 150.0,
            },
            None,
        );
        let state = Arc::new(AppState::with_model(
            EventStore::open(events_path).unwrap(),
            LoadedModel::from_checkpoint(&ckpt).unwrap(),
        ));
        let runtime = tokio::runtime::Runtime::new().unwrap();
        let addr: SocketAddr = "127.0.0.1:0".parse().unwrap();
        let handle = runtime
            .block_on(bind_and_serve(addr, state, Duration::from_secs(30)))
            .unwrap();
        let url = format!("http://{}", handle.addr);
        Self {
            url,
            runtime,
            handle: Some(handle),
        }
    }

    fn stop(&mut self) {
        if let Some(handle) = self.handle.take() {
            self.runtime.block_on(handle.shutdown()).unwrap();
        }
    }
}

impl Drop for LiveService {
    fn drop(&mut self) {
        self.stop();
    }
}

#[test]
fn completed_episode_is_persisted_and_retrievable() {
    let events_path = std::env::temp_dir().join(format!(
        "epilnet-alert-e2e-{}.jsonl",
        std::process::id()
    ));
    std::fs::remove_file(&events_path).ok();
    let service = LiveService::start(&events_path);

    let script = "start\n\
                  at 0 inject pre-ictal\n\
                  at 30 inject ictal\n\
                  at 120 inject healthy\n\
                  stop\n";
    let mut sink = HttpEventSink::new(&service.url);
    let outcome = run_scenario(
        script,
        &contacts(),
        LocationProviders::default(),
        &mut sink,
        None,
        None,
        &ScenarioConfig {
            patient_id: "pat-7".into(),
        },
    )
    .unwrap();
    assert_eq!(outcome.stored_events, 1);
    assert_eq!(outcome.queued_events, 0);

    let listed: Vec<StoredEvent> = reqwest::blocking::get(format!(
        "{}/patients/pat-7/events",
        service.url
    ))
    .unwrap()
    .json()
    .unwrap();
    assert_eq!(listed.len(), 1);
    assert_eq!(listed[0].event.kind, EventKind::Ictal);
    assert_eq!(listed[0].event.timestamp, 30);
    assert_eq!(listed[0].event.duration_seconds, Some(90));
    std::fs::remove_file(events_path).ok();
}

#[test]
fn unreachable_service_queues_and_reconnect_delivers() {
    // Reserve a port, keep it closed for now.
    let listener = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();
    drop(listener);

    let mut sink = HttpEventSink::new(format!("http://{addr}"));
    let event = SeizureEvent {
        kind: EventKind::Ictal,
        timestamp: 10,
        location: None,
        duration_seconds: Some(20),
        probabilities: None,
    };
    assert_eq!(
        sink.deliver("pat-9", &event),
        epilnet_alert::Delivery::Queued
    );
    assert_eq!(sink.pending(), 1);

    // Bring a real service up on that same port and retry.
    let model = build_epilnet::<f32>(3, 0.0625, 6).unwrap();
    let ckpt = Checkpoint::from_model(
        &model,
        GroupMode::ThreeClass,
        GroupMapping::new(GroupMode::ThreeClass).class_names(),
        NormStats { mean: 0.0, std: 1.0 },
        None,
    );
    let events_path = std::env::temp_dir().join(format!(
        "epilnet-alert-queue-{}.jsonl",
        std::process::id()
    ));
    std::fs::remove_file(&events_path).ok();
    let state = Arc::new(AppState::with_model(
        EventStore::open(&events_path).unwrap(),
        LoadedModel::from_checkpoint(&ckpt).unwrap(),
    ));
    let runtime = tokio::runtime::Runtime::new().unwrap();
    let handle = runtime
        .block_on(bind_and_serve(addr, state, Duration::from_secs(30)))
        .unwrap();

    assert_eq!(sink.retry_pending(), 1);
    assert_eq!(sink.pending(), 0);

    let listed: Vec<StoredEvent> =
        reqwest::blocking::get(format!("http://{addr}/patients/pat-9/events"))
            .unwrap()
            .json()
            .unwrap();
    assert_eq!(listed.len(), 1);
    runtime.block_on(handle.shutdown()).unwrap();
    std::fs::remove_file(events_path).ok();
}

#[test]
fn window_driven_scenario_uses_the_live_model() {
    let events_path = std::env::temp_dir().join(format!(
        "epilnet-alert-window-{}.jsonl",
        std::process::id()
    ));
    std::fs::remove_file(&events_path).ok();
    let service = LiveService::start(&events_path);

    // Whatever the untrained model predicts, driving a real window through
    // the HTTP predictor must be deterministic and not error.
    let windows: Vec<[f32; 178]> = epilnet_core::synthetic::synthetic_records(2, 11)
        .into_iter()
        .map(|r| r.samples)
        .collect();
    let script = "start\nat 0 window 0\nat 30 window 5\nstop\n";
    let run = || {
        let mut sink = HttpEventSink::new(&service.url);
        let mut predictor = HttpPredictor::new(&service.url);
        run_scenario(
            script,
            &contacts(),
            LocationProviders::default(),
            &mut sink,
            Some(&mut predictor),
            Some(&windows),
            &ScenarioConfig::default(),
        )
        .unwrap()
    };
    let a = run();
    let b = run();
    assert_eq!(a.notifications, b.notifications);
    assert_eq!(a.final_phase, b.final_phase);
    std::fs::remove_file(events_path).ok();
}
