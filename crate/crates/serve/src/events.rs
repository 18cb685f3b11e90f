//! Append-only patient event persistence.
//!
//! Events land in a JSON-lines file (one `StoredEvent` per line) with an
//! in-memory index rebuilt by replaying the file on startup, so the history
//! survives service restarts. Appends are serialized through one writer;
//! reads go through the index and may run concurrently.

use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Mutex, RwLock};

use epilnet_wire::{SeizureEvent, StoredEvent};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum EventStoreError {
    #[error("failed to access event store {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("event store {path} line {line} is not a valid event: {source}")]
    Corrupt {
        path: String,
        line: usize,
        #[source]
        source: serde_json::Error,
    },
}

pub struct EventStore {
    path: PathBuf,
    writer: Mutex<BufWriter<File>>,
    index: RwLock<HashMap<String, Vec<StoredEvent>>>,
    next_id: AtomicU64,
}

impl EventStore {
    /// Open (or create) the store, replaying any existing JSON-lines file.
    pub fn open(path: impl AsRef<Path>) -> Result<Self, EventStoreError> {
        let path = path.as_ref().to_path_buf();
        let io_err = |source: std::io::Error| EventStoreError::Io {
            path: path.display().to_string(),
            source,
        };

        let mut index: HashMap<String, Vec<StoredEvent>> = HashMap::new();
        let mut max_id = 0u64;
        if path.exists() {
            let file = File::open(&path).map_err(io_err)?;
            for (line_no, line) in BufReader::new(file).lines().enumerate() {
                let line = line.map_err(io_err)?;
                if line.trim().is_empty() {
                    continue;
                }
                let stored: StoredEvent =
                    serde_json::from_str(&line).map_err(|source| EventStoreError::Corrupt {
                        path: path.display().to_string(),
                        line: line_no + 1,
                        source,
                    })?;
                max_id = max_id.max(stored.id);
                index.entry(stored.patient_id.clone()).or_default().push(stored);
            }
        }

        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&path)
            .map_err(io_err)?;

        Ok(Self {
            path,
            writer: Mutex::new(BufWriter::new(file)),
            index: RwLock::new(index),
            next_id: AtomicU64::new(max_id + 1),
        })
    }

    /// Append one event; the line is flushed before the call returns.
    pub fn append(&self, patient_id: &str, event: SeizureEvent) -> Result<u64, EventStoreError> {
        let id = self.next_id.fetch_add(1, Ordering::SeqCst);
        let stored = StoredEvent {
            id,
            patient_id: patient_id.to_owned(),
            event,
        };
        let line = serde_json::to_string(&stored).expect("wire types serialize");
        {
            let mut writer = self.writer.lock().expect("event writer poisoned");
            writeln!(writer, "{line}").map_err(|source| EventStoreError::Io {
                path: self.path.display().to_string(),
                source,
            })?;
            writer.flush().map_err(|source| EventStoreError::Io {
                path: self.path.display().to_string(),
                source,
            })?;
        }
        self.index
            .write()
            .expect("event index poisoned")
            .entry(patient_id.to_owned())
            .or_default()
            .push(stored);
        Ok(id)
    }

    /// Events for one patient in (timestamp, id) order; unknown patients
    /// get an empty list.
    pub fn list(&self, patient_id: &str) -> Vec<StoredEvent> {
        let mut events = self
            .index
            .read()
            .expect("event index poisoned")
            .get(patient_id)
            .cloned()
            .unwrap_or_default();
        events.sort_by_key(|e| (e.event.timestamp, e.id));
        events
    }

    pub fn total_events(&self) -> usize {
        self.index
            .read()
            .expect("event index poisoned")
            .values()
            .map(Vec::len)
            .sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use epilnet_wire::EventKind;

    fn event(timestamp: u64) -> SeizureEvent {
        SeizureEvent {
            kind: EventKind::PreIctalAlarm,
            timestamp,
            location: None,
            duration_seconds: None,
            probabilities: None,
        }
    }

    fn temp_store(tag: &str) -> PathBuf {
        std::env::temp_dir().join(format!("epilnet-events-{tag}-{}.jsonl", std::process::id()))
    }

    #[test]
    fn events_come_back_in_timestamp_order() {
        let path = temp_store("order");
        std::fs::remove_file(&path).ok();
        let store = EventStore::open(&path).unwrap();
        store.append("p1", event(30)).unwrap();
        store.append("p1", event(10)).unwrap();
        store.append("p1", event(20)).unwrap();
        let listed = store.list("p1");
        let times: Vec<u64> = listed.iter().map(|e| e.event.timestamp).collect();
        assert_eq!(times, vec![10, 20, 30]);
        assert!(store.list("nobody").is_empty());
        std::fs::remove_file(path).ok();
    }

    #[test]
    fn replay_preserves_events_and_continues_ids() {
        let path = temp_store("replay");
        std::fs::remove_file(&path).ok();
        let first_ids: Vec<u64> = {
            let store = EventStore::open(&path).unwrap();
            (0..3).map(|i| store.append("p", event(i)).unwrap()).collect()
        };
        let store = EventStore::open(&path).unwrap();
        assert_eq!(store.total_events(), 3);
        let new_id = store.append("p", event(99)).unwrap();
        assert!(new_id > *first_ids.iter().max().unwrap());
        assert_eq!(store.list("p").len(), 4);
        std::fs::remove_file(path).ok();
    }

    #[test]
    fn corrupt_lines_are_reported_with_position() {
        let path = temp_store("corrupt");
        std::fs::write(&path, "{\"not\": \"an event\"}\n").unwrap();
        match EventStore::open(&path) {
            Err(EventStoreError::Corrupt { line, .. }) => assert_eq!(line, 1),
            Err(other) => panic!("unexpected error {other}"),
            Ok(_) => panic!("corrupt store must not open"),
        }
        std::fs::remove_file(path).ok();
    }
}
