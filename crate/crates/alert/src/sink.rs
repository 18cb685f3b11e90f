//! Delivery of flushed seizure events to the inference service's history
//! endpoint, with queue-on-failure semantics.

use std::collections::VecDeque;
use std::time::Duration;

use epilnet_wire::{EventAccepted, SeizureEvent};

/// What happened to one event.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Delivery {
    Stored { id: u64 },
    Queued,
}

pub trait EventSink {
    /// Deliver one event, retrying anything queued first. Never fails:
    /// undeliverable events stay queued for the next attempt.
    fn deliver(&mut self, patient_id: &str, event: &SeizureEvent) -> Delivery;

    fn pending(&self) -> usize;

    /// Try to deliver queued events; returns how many went through.
    fn retry_pending(&mut self) -> usize;
}

/// Posts events to `POST /patients/{id}/events`; connection failures queue
/// the event for redelivery on the next call.
pub struct HttpEventSink {
    base_url: String,
    client: reqwest::blocking::Client,
    queue: VecDeque<(String, SeizureEvent)>,
}

impl HttpEventSink {
    pub fn new(base_url: impl Into<String>) -> Self {
        Self {
            base_url: base_url.into(),
            client: reqwest::blocking::Client::builder()
                .timeout(Duration::from_secs(10))
                .build()
                .expect("client builds"),
            queue: VecDeque::new(),
        }
    }

    fn post(&self, patient_id: &str, event: &SeizureEvent) -> Option<u64> {
        let url = format!(
            "{}/patients/{patient_id}/events",
            self.base_url.trim_end_matches('/')
        );
        let resp = self.client.post(url).json(event).send().ok()?;
        if !resp.status().is_success() {
            return None;
        }
        resp.json::<EventAccepted>().ok().map(|a| a.id)
    }
}

impl EventSink for HttpEventSink {
    fn deliver(&mut self, patient_id: &str, event: &SeizureEvent) -> Delivery {
        self.retry_pending();
        if !self.queue.is_empty() {
            // Keep ordering: earlier events must land first.
            self.queue.push_back((patient_id.to_owned(), event.clone()));
            return Delivery::Queued;
        }
        match self.post(patient_id, event) {
            Some(id) => Delivery::Stored { id },
            None => {
                self.queue.push_back((patient_id.to_owned(), event.clone()));
                Delivery::Queued
            }
        }
    }

    fn pending(&self) -> usize {
        self.queue.len()
    }

    fn retry_pending(&mut self) -> usize {
        let mut delivered = 0;
        while let Some((patient, event)) = self.queue.front() {
            match self.post(patient, event) {
                Some(_) => {
                    self.queue.pop_front();
                    delivered += 1;
                }
                None => break,
            }
        }
        delivered
    }
}

/// Records deliveries in memory; always succeeds. For tests and dry runs.
#[derive(Debug, Default)]
pub struct MemoryEventSink {
    pub delivered: Vec<(String, SeizureEvent)>,
}

impl EventSink for MemoryEventSink {
    fn deliver(&mut self, patient_id: &str, event: &SeizureEvent) -> Delivery {
        self.delivered.push((patient_id.to_owned(), event.clone()));
        Delivery::Stored {
            id: self.delivered.len() as u64,
        }
    }

    fn pending(&self) -> usize {
        0
    }

    fn retry_pending(&mut self) -> usize {
        0
    }
}

/// Queues everything; used when no service URL is configured so the run
/// report can still show what would have been posted.
#[derive(Debug, Default)]
pub struct QueueOnlySink {
    pub queued: Vec<(String, SeizureEvent)>,
}

impl EventSink for QueueOnlySink {
    fn deliver(&mut self, patient_id: &str, event: &SeizureEvent) -> Delivery {
        self.queued.push((patient_id.to_owned(), event.clone()));
        Delivery::Queued
    }

    fn pending(&self) -> usize {
        self.queued.len()
    }

    fn retry_pending(&mut self) -> usize {
        0
    }
}
