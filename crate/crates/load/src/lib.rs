//! Closed-loop concurrent load generator for the inference service.
//!
//! N virtual clients start linearly across a ramp-up window, then each
//! loops `POST /predict` (next request after the previous response) until
//! the sustain window closes. Every request is logged with its start
//! offset, wall-clock latency, and status; summaries are computed from the
//! log with exact integer accumulators so an independent recomputation
//! from the persisted log reproduces them bit for bit.

use std::fs;
use std::io::Write;
use std::path::Path;
use std::sync::Arc;
use std::time::{Duration, Instant};

use epilnet_wire::PredictRequest;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum LoadError {
    #[error("no payload windows to send")]
    NoPayloads,
    #[error("load config invalid: {reason}")]
    InvalidConfig { reason: String },
    #[error("target {target} unreachable: {reason}")]
    Unreachable { target: String, reason: String },
    #[error("raw sample log is empty")]
    EmptyLog,
    #[error("failed to access {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("raw log line {line}: {reason}")]
    BadLog { line: usize, reason: String },
    #[error("http client: {0}")]
    Client(#[from] reqwest::Error),
}

/// One load run against one class of payloads.
#[derive(Clone, Debug)]
pub struct LoadConfig {
    /// Base URL, e.g. `http://127.0.0.1:8080`.
    pub target: String,
    pub clients: usize,
    pub sustain: Duration,
    pub ramp_up: Duration,
    /// Class tag recorded with every sample (e.g. "A").
    pub label: String,
    /// Request bodies the clients cycle through.
    pub payloads: Vec<Vec<f64>>,
    /// Probe `/health` before starting; disable to measure a dead target.
    pub preflight: bool,
    pub request_timeout: Duration,
}

impl LoadConfig {
    pub fn new(target: impl Into<String>, label: impl Into<String>, payloads: Vec<Vec<f64>>) -> Self {
        Self {
            target: target.into(),
            clients: 100,
            sustain: Duration::from_secs(60),
            ramp_up: Duration::from_secs(10),
            label: label.into(),
            payloads,
            preflight: true,
            request_timeout: Duration::from_secs(30),
        }
    }
}

/// One request observation. `status` 0 means the request never produced an
/// HTTP response (transport error or timeout).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Sample {
    pub label: String,
    /// Start offset from the run epoch, microseconds.
    pub start_us: u64,
    pub latency_us: u64,
    pub status: u16,
}

impl Sample {
    pub fn completed(&self) -> bool {
        (200..300).contains(&self.status)
    }
}

/// Run the closed-loop protocol. Returns every sample, sorted by
/// (start, latency, status) into a canonical order.
pub fn run_load(config: &LoadConfig) -> Result<Vec<Sample>, LoadError> {
    if config.payloads.is_empty() {
        return Err(LoadError::NoPayloads);
    }
    if config.clients == 0 || config.sustain.is_zero() {
        return Err(LoadError::InvalidConfig {
            reason: format!(
                "clients must be >= 1 and sustain > 0 (clients {}, sustain {:?})",
                config.clients, config.sustain
            ),
        });
    }

    let client = reqwest::blocking::Client::builder()
        .timeout(config.request_timeout)
        .pool_max_idle_per_host(config.clients)
        .build()?;

    if config.preflight {
        let url = format!("{}/health", config.target.trim_end_matches('/'));
        if let Err(e) = client.get(&url).send() {
            return Err(LoadError::Unreachable {
                target: config.target.clone(),
                reason: e.to_string(),
            });
        }
    }

    let predict_url = Arc::new(format!("{}/predict", config.target.trim_end_matches('/')));
    let bodies: Arc<Vec<String>> = Arc::new(
        config
            .payloads
            .iter()
            .map(|data| {
                serde_json::to_string(&PredictRequest { data: data.clone() })
                    .expect("payloads serialize")
            })
            .collect(),
    );

    let epoch = Instant::now();
    let deadline = epoch + config.ramp_up + config.sustain;
    let label = config.label.clone();

    let mut samples: Vec<Sample> = std::thread::scope(|scope| {
        let handles: Vec<_> = (0..config.clients)
            .map(|client_idx| {
                let client = client.clone();
                let bodies = Arc::clone(&bodies);
                let url = Arc::clone(&predict_url);
                let label = label.clone();
                let start_delay = config.ramp_up.mul_f64(client_idx as f64 / config.clients as f64);
                scope.spawn(move || {
                    let mut local = Vec::new();
                    let wake = epoch + start_delay;
                    if let Some(pause) = wake.checked_duration_since(Instant::now()) {
                        std::thread::sleep(pause);
                    }
                    let mut request_no = 0usize;
                    while Instant::now() < deadline {
                        let body = &bodies[(client_idx + request_no) % bodies.len()];
                        request_no += 1;
                        let started = Instant::now();
                        let status = match client
                            .post(url.as_str())
                            .header("content-type", "application/json")
                            .body(body.clone())
                            .send()
                        {
                            Ok(resp) => {
                                let code = resp.status().as_u16();
                                // Drain the body so latency covers the
                                // full transfer.
                                let _ = resp.bytes();
                                code
                            }
                            Err(_) => 0,
                        };
                        local.push(Sample {
                            label: label.clone(),
                            start_us: started.duration_since(epoch).as_micros() as u64,
                            latency_us: started.elapsed().as_micros() as u64,
                            status,
                        });
                    }
                    local
                })
            })
            .collect();
        handles
            .into_iter()
            .flat_map(|h| h.join().expect("load client panicked"))
            .collect()
    });

    samples.sort_by(|a, b| {
        (a.start_us, a.latency_us, a.status).cmp(&(b.start_us, b.latency_us, b.status))
    });
    Ok(samples)
}

/// Persist the raw log as CSV: `label,start_us,latency_us,status`.
pub fn write_raw_log(path: impl AsRef<Path>, samples: &[Sample]) -> Result<(), LoadError> {
    let path = path.as_ref();
    let io_err = |source: std::io::Error| LoadError::Io {
        path: path.display().to_string(),
        source,
    };
    let mut out = fs::File::create(path).map_err(io_err)?;
    writeln!(out, "label,start_us,latency_us,status").map_err(io_err)?;
    for s in samples {
        writeln!(out, "{},{},{},{}", s.label, s.start_us, s.latency_us, s.status).map_err(io_err)?;
    }
    Ok(())
}

/// Parse a raw log produced by [`write_raw_log`].
pub fn parse_raw_log(path: impl AsRef<Path>) -> Result<Vec<Sample>, LoadError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|source| LoadError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let mut samples = Vec::new();
    for (line_no, line) in text.lines().enumerate() {
        if line_no == 0 {
            if line != "label,start_us,latency_us,status" {
                return Err(LoadError::BadLog {
                    line: 1,
                    reason: format!("unexpected header {line:?}"),
                });
            }
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 4 {
            return Err(LoadError::BadLog {
                line: line_no + 1,
                reason: format!("expected 4 fields, got {}", fields.len()),
            });
        }
        let parse_u64 = |f: &str, what: &str| {
            f.parse::<u64>().map_err(|_| LoadError::BadLog {
                line: line_no + 1,
                reason: format!("non-numeric {what} {f:?}"),
            })
        };
        samples.push(Sample {
            label: fields[0].to_owned(),
            start_us: parse_u64(fields[1], "start_us")?,
            latency_us: parse_u64(fields[2], "latency_us")?,
            status: parse_u64(fields[3], "status")? as u16,
        });
    }
    Ok(samples)
}

/// Per-label statistics with exact integer accumulators. Latency stats
/// cover completed (2xx) requests only; `samples == completed + errors`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LabelSummary {
    pub label: String,
    pub samples: u64,
    pub completed: u64,
    pub errors: u64,
    pub min_us: u64,
    pub max_us: u64,
    pub sum_us: u128,
    pub sum_sq_us: u128,
    /// Nearest-rank 99th percentile latency.
    pub p99_us: u64,
    /// First request start to last request completion, microseconds.
    pub span_us: u64,
}

impl LabelSummary {
    pub fn mean_ms(&self) -> f64 {
        if self.completed == 0 {
            return 0.0;
        }
        self.sum_us as f64 / self.completed as f64 / 1e3
    }

    /// Sample standard deviation in milliseconds; 0 by convention when
    /// fewer than two requests completed.
    pub fn std_ms(&self) -> f64 {
        let n = self.completed as u128;
        if n < 2 {
            return 0.0;
        }
        // n*sum_sq - sum^2 is exact in u128; one rounding at the division.
        let numerator = n * self.sum_sq_us - self.sum_us * self.sum_us;
        let variance_us2 = numerator as f64 / (n * (n - 1)) as f64;
        variance_us2.sqrt() / 1e3
    }

    /// Completed requests per second over the label's observed span.
    pub fn throughput_per_sec(&self) -> f64 {
        if self.completed == 0 || self.span_us == 0 {
            return 0.0;
        }
        self.completed as f64 / (self.span_us as f64 / 1e6)
    }
}

/// Group samples by label (alphabetical) and reduce with integer-exact
/// accumulators.
pub fn summarize(samples: &[Sample]) -> Result<Vec<LabelSummary>, LoadError> {
    if samples.is_empty() {
        return Err(LoadError::EmptyLog);
    }
    let mut labels: Vec<String> = samples.iter().map(|s| s.label.clone()).collect();
    labels.sort();
    labels.dedup();

    let mut rows = Vec::with_capacity(labels.len());
    for label in labels {
        let group: Vec<&Sample> = samples.iter().filter(|s| s.label == label).collect();
        let mut completed_latencies: Vec<u64> = group
            .iter()
            .filter(|s| s.completed())
            .map(|s| s.latency_us)
            .collect();
        completed_latencies.sort_unstable();

        let completed = completed_latencies.len() as u64;
        let samples_total = group.len() as u64;
        let sum_us: u128 = completed_latencies.iter().map(|&v| v as u128).sum();
        let sum_sq_us: u128 = completed_latencies
            .iter()
            .map(|&v| (v as u128) * (v as u128))
            .sum();
        let p99_us = if completed_latencies.is_empty() {
            0
        } else {
            let rank = ((0.99 * completed_latencies.len() as f64).ceil() as usize)
                .clamp(1, completed_latencies.len());
            completed_latencies[rank - 1]
        };
        let span_us = {
            let starts = group.iter().filter(|s| s.completed());
            let first = starts.clone().map(|s| s.start_us).min();
            let last = starts.map(|s| s.start_us + s.latency_us).max();
            match (first, last) {
                (Some(f), Some(l)) => l.saturating_sub(f),
                _ => 0,
            }
        };

        rows.push(LabelSummary {
            label,
            samples: samples_total,
            completed,
            errors: samples_total - completed,
            min_us: completed_latencies.first().copied().unwrap_or(0),
            max_us: completed_latencies.last().copied().unwrap_or(0),
            sum_us,
            sum_sq_us,
            p99_us,
            span_us,
        });
    }
    Ok(rows)
}

fn format_throughput(per_sec: f64) -> String {
    if per_sec >= 1.0 {
        format!("{per_sec:.1} /sec")
    } else {
        format!("{:.1} /min", per_sec * 60.0)
    }
}

/// Aligned text table: Label, Samples, Average, Min, Max, Std. dev.,
/// Throughput, plus error count and p99. Latencies are in milliseconds.
pub fn render_table(rows: &[LabelSummary]) -> String {
    let mut out = String::new();
    out.push_str(&format!(
        "{:<10} {:>8} {:>12} {:>10} {:>10} {:>12} {:>12} {:>8} {:>10}\n",
        "Label", "Samples", "Average", "Min", "Max", "Std. dev.", "Throughput", "Errors", "p99"
    ));
    for row in rows {
        out.push_str(&format!(
            "{:<10} {:>8} {:>12.2} {:>10.2} {:>10.2} {:>12.2} {:>12} {:>8} {:>10.2}\n",
            format!("Request {}", row.label),
            row.samples,
            row.mean_ms(),
            row.min_us as f64 / 1e3,
            row.max_us as f64 / 1e3,
            row.std_ms(),
            format_throughput(row.throughput_per_sec()),
            row.errors,
            row.p99_us as f64 / 1e3,
        ));
    }
    out
}
