//! Deterministic synthetic EEG-like waveform generator.
//!
//! Produces class-conditional 178-sample windows whose shapes loosely echo
//! the real recordings (low-amplitude rhythms for healthy classes, spikes
//! for inter-ictal, a building chirp for pre-ictal, large oscillations for
//! ictal). Used by smoke tests, demos, and the load harness when the real
//! dataset file is not on disk. Values are rounded to integers to match
//! the dataset's integer amplitudes.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::data::{EegRecord, SAMPLES_PER_RECORD};

/// Generate `per_label` records for each of the five labels, deterministic
/// in `seed`. Records are interleaved A,B,C,D,E,A,B,... so any prefix stays
/// label-balanced.
pub fn synthetic_records(per_label: usize, seed: u64) -> Vec<EegRecord> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut records = Vec::with_capacity(per_label * 5);
    for rep in 0..per_label {
        for label in 1..=5u8 {
            records.push(EegRecord {
                id: Some(format!("S{label}.R{rep:04}")),
                samples: window(label, &mut rng),
                label,
            });
        }
    }
    records
}

fn window(label: u8, rng: &mut ChaCha8Rng) -> [f32; SAMPLES_PER_RECORD] {
    let mut out = [0.0f32; SAMPLES_PER_RECORD];
    let phase: f64 = rng.random_range(0.0..std::f64::consts::TAU);
    for (i, v) in out.iter_mut().enumerate() {
        let t = i as f64 / SAMPLES_PER_RECORD as f64;
        let noise = |rng: &mut ChaCha8Rng, scale: f64| (rng.random::<f64>() - 0.5) * 2.0 * scale;
        let value = match label {
            // Healthy, eyes open: slow low-amplitude rhythm.
            1 => (t * 6.0 * std::f64::consts::TAU + phase).sin() * 40.0 + noise(rng, 12.0),
            // Healthy, eyes closed: faster alpha-like rhythm.
            2 => (t * 11.0 * std::f64::consts::TAU + phase).sin() * 65.0 + noise(rng, 12.0),
            // Inter-ictal: quiet baseline with sharp periodic spikes.
            3 => {
                let spike = if i % 30 == (phase * 4.0) as usize % 30 {
                    260.0
                } else {
                    0.0
                };
                noise(rng, 25.0) + spike
            }
            // Pre-ictal: chirp whose frequency and amplitude build up.
            4 => {
                let freq = 4.0 + 14.0 * t;
                (t * freq * std::f64::consts::TAU + phase).sin() * (60.0 + 160.0 * t)
                    + noise(rng, 20.0)
            }
            // Ictal: large erratic oscillation.
            5 => {
                (t * 9.0 * std::f64::consts::TAU + phase).sin() * 650.0
                    + (t * 23.0 * std::f64::consts::TAU).cos() * 300.0
                    + noise(rng, 120.0)
            }
            _ => unreachable!("labels are 1..=5"),
        };
        *v = value.round() as f32;
    }
    out
}
