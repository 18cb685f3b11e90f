//! Mini-batch training with per-epoch validation and best-checkpoint
//! selection, plus evaluation (accuracy + confusion matrix).
//!
//! Parameter updates are single-threaded and fully deterministic under the
//! configured seed: shuffling comes from a seeded generator and gradients
//! are accumulated in a fixed order. Evaluation may fan out over worker
//! threads on disjoint record ranges; the merged counts do not depend on
//! scheduling.

use std::fmt;
use std::path::Path;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::checkpoint::{Checkpoint, CheckpointError, TrainMeta};
use crate::data::{normalize, shuffled_indices, DataError, EegDataset, Split};
use crate::layers::{softmax_cross_entropy, LossError};
use crate::model::{argmax_lowest, EpilNet, ModelError, TensorKind, INPUT_LENGTH};
use crate::optim::{AdamConfig, AdamState};
use crate::tensor::SignalTensor;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("model expects {model} classes but the dataset grouping has {data}")]
    ClassCountMismatch { model: usize, data: usize },
    #[error("dataset has no normalization statistics; compute them from the training split first")]
    MissingNorm,
    #[error("invalid training config: {reason}")]
    InvalidConfig { reason: String },
    #[error("non-finite loss at epoch {epoch}, batch {batch}; training aborted")]
    NonFiniteLoss { epoch: usize, batch: usize },
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Loss(#[from] LossError),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub learning_rate: f64,
    pub shuffle: bool,
    /// Worker threads for epoch-end validation (1 = inline).
    pub eval_threads: usize,
    pub split_ratios: (f64, f64, f64),
    pub split_seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 20,
            batch_size: 64,
            seed: 42,
            learning_rate: 1e-3,
            shuffle: true,
            eval_threads: 1,
            split_ratios: (0.76, 0.12, 0.12),
            split_seed: 42,
        }
    }
}

/// Per-epoch record. Wall time is informational only and excluded from the
/// exported curve so identical runs export identical bytes.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EpochReport {
    pub epoch: usize,
    pub train_loss: f64,
    pub train_accuracy: f64,
    pub val_accuracy: f64,
    pub wall_secs: f64,
}

#[derive(Debug)]
pub struct TrainOutcome {
    pub reports: Vec<EpochReport>,
    pub best: Checkpoint,
    pub best_epoch: usize,
    pub best_val_accuracy: f64,
}

/// True-vs-predicted counts; rows are the true target, columns the
/// prediction.
#[derive(Clone, Debug, PartialEq)]
pub struct ConfusionMatrix {
    counts: Vec<u64>,
    class_names: Vec<String>,
}

impl ConfusionMatrix {
    pub fn new(class_names: Vec<String>) -> Self {
        let c = class_names.len();
        Self {
            counts: vec![0; c * c],
            class_names,
        }
    }

    pub fn class_count(&self) -> usize {
        self.class_names.len()
    }

    pub fn record(&mut self, true_target: usize, predicted: usize) {
        let c = self.class_count();
        self.counts[true_target * c + predicted] += 1;
    }

    pub fn count(&self, true_target: usize, predicted: usize) -> u64 {
        self.counts[true_target * self.class_count() + predicted]
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..self.class_count()).map(|i| self.count(i, i)).sum()
    }

    /// trace / total, the accuracy implied by the matrix alone.
    pub fn accuracy(&self) -> f64 {
        let total = self.total();
        if total == 0 {
            return 0.0;
        }
        self.trace() as f64 / total as f64
    }

    pub fn row_sum(&self, true_target: usize) -> u64 {
        (0..self.class_count()).map(|p| self.count(true_target, p)).sum()
    }

    fn merge(&mut self, other: &ConfusionMatrix) {
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
    }
}

impl fmt::Display for ConfusionMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let c = self.class_count();
        let width = self
            .class_names
            .iter()
            .map(|n| n.len())
            .chain(self.counts.iter().map(|v| v.to_string().len()))
            .max()
            .unwrap_or(1)
            .max(4)
            + 2;
        write!(f, "{:>w$}", "true\\pred", w = width + 4)?;
        for name in &self.class_names {
            write!(f, "{name:>width$}")?;
        }
        writeln!(f)?;
        for (t, name) in self.class_names.iter().enumerate() {
            write!(f, "{name:>w$}", w = width + 4)?;
            for p in 0..c {
                write!(f, "{:>width$}", self.count(t, p))?;
            }
            writeln!(f)?;
        }
        Ok(())
    }
}

/// Train the model in place. A checkpoint snapshot is taken whenever the
/// validation accuracy strictly improves; when `save_path` is given the
/// snapshot is also written to disk at that moment.
pub fn train(
    model: &mut EpilNet<f32>,
    data: &EegDataset,
    config: &TrainConfig,
    save_path: Option<&Path>,
) -> Result<TrainOutcome, TrainError> {
    if config.epochs < 1 || config.batch_size < 1 {
        return Err(TrainError::InvalidConfig {
            reason: format!(
                "epochs and batch size must be >= 1 (epochs {}, batch {})",
                config.epochs, config.batch_size
            ),
        });
    }
    if model.class_count() != data.mapping.class_count() {
        return Err(TrainError::ClassCountMismatch {
            model: model.class_count(),
            data: data.mapping.class_count(),
        });
    }
    let norm = data.norm.ok_or(TrainError::MissingNorm)?;
    let train_idx = data.indices_of(Split::Train)?;
    let val_idx = data.indices_of(Split::Val)?;
    if train_idx.is_empty() {
        return Err(DataError::EmptySplit { split: Split::Train }.into());
    }
    if val_idx.is_empty() {
        return Err(DataError::EmptySplit { split: Split::Val }.into());
    }

    // Normalize every window once up front.
    let normalized: Vec<[f32; INPUT_LENGTH]> = data
        .records
        .iter()
        .map(|r| normalize(&r.samples, &norm))
        .collect();

    let class_count = model.class_count();
    let mut adam = AdamState::<f32>::new(
        AdamConfig::with_learning_rate(config.learning_rate),
        &model.trainable_slot_sizes(),
    );
    let mut grads = model.zeros_like();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);

    let mut reports = Vec::with_capacity(config.epochs);
    let mut best: Option<(Checkpoint, usize, f64)> = None;

    for epoch in 1..=config.epochs {
        let started = Instant::now();
        let order: Vec<usize> = if config.shuffle {
            shuffled_indices(train_idx.len(), &mut rng)
                .into_iter()
                .map(|i| train_idx[i])
                .collect()
        } else {
            train_idx.clone()
        };

        let mut loss_sum = 0.0f64;
        let mut correct = 0usize;
        for (batch_no, chunk) in order.chunks(config.batch_size).enumerate() {
            let bsz = chunk.len();
            let mut values = Vec::with_capacity(bsz * INPUT_LENGTH);
            for &i in chunk {
                values.extend_from_slice(&normalized[i]);
            }
            let x = SignalTensor::from_values(bsz, 1, INPUT_LENGTH, values)
                .expect("batch assembly");

            let (logits, tape) = model.forward_train(x)?;
            let mut d_logits = SignalTensor::zeros(bsz, class_count, 1);
            let mut batch_loss = 0.0f64;
            for (row, &i) in chunk.iter().enumerate() {
                let target = data.targets[i];
                let row_logits: Vec<f32> =
                    (0..class_count).map(|c| logits.at(row, c, 0)).collect();
                let sce = softmax_cross_entropy(&row_logits, target)?;
                batch_loss += sce.loss as f64;
                if argmax_lowest(&sce.probabilities) == target {
                    correct += 1;
                }
                let scale = 1.0 / bsz as f32;
                for c in 0..class_count {
                    *d_logits.at_mut(row, c, 0) = sce.grad_logits[c] * scale;
                }
            }
            let batch_mean_loss = batch_loss / bsz as f64;
            if !batch_mean_loss.is_finite() {
                return Err(TrainError::NonFiniteLoss {
                    epoch,
                    batch: batch_no,
                });
            }
            loss_sum += batch_loss;

            model.backward(&tape, &d_logits, &mut grads)?;
            apply_adam(model, &grads, &mut adam);
        }

        let train_loss = loss_sum / order.len() as f64;
        let train_accuracy = correct as f64 / order.len() as f64;
        let (val_accuracy, _) =
            evaluate_indices(model, data, &val_idx, config.eval_threads)?;

        let improved = best
            .as_ref()
            .map(|(_, _, acc)| val_accuracy > *acc)
            .unwrap_or(true);
        if improved {
            let snapshot = Checkpoint::from_model(
                model,
                data.mapping.mode,
                data.mapping.class_names(),
                norm,
                Some(TrainMeta {
                    train_seed: config.seed,
                    epochs: config.epochs,
                    batch_size: config.batch_size,
                    learning_rate: config.learning_rate,
                    split_ratios: config.split_ratios,
                    split_seed: config.split_seed,
                    best_epoch: epoch,
                    validation_accuracy: val_accuracy,
                }),
            );
            if let Some(path) = save_path {
                snapshot.save(path)?;
            }
            best = Some((snapshot, epoch, val_accuracy));
        }

        reports.push(EpochReport {
            epoch,
            train_loss,
            train_accuracy,
            val_accuracy,
            wall_secs: started.elapsed().as_secs_f64(),
        });
    }

    let (best, best_epoch, best_val_accuracy) =
        best.expect("at least one epoch ran, so a best snapshot exists");
    Ok(TrainOutcome {
        reports,
        best,
        best_epoch,
        best_val_accuracy,
    })
}

fn apply_adam(model: &mut EpilNet<f32>, grads: &EpilNet<f32>, adam: &mut AdamState<f32>) {
    adam.begin_step();
    let grad_values: Vec<&[f32]> = grads
        .tensor_slots()
        .into_iter()
        .filter(|s| s.kind == TensorKind::Param)
        .map(|s| s.values)
        .collect();
    let mut slot = 0;
    for param in model.tensor_slots_mut() {
        if param.kind != TensorKind::Param {
            continue;
        }
        adam.update_slot(slot, param.values, grad_values[slot]);
        slot += 1;
    }
}

/// Eval-mode accuracy and confusion matrix over one split.
pub fn evaluate(
    model: &EpilNet<f32>,
    data: &EegDataset,
    split: Split,
    threads: usize,
) -> Result<(f64, ConfusionMatrix), TrainError> {
    let indices = data.indices_of(split)?;
    if indices.is_empty() {
        return Err(DataError::EmptySplit { split }.into());
    }
    evaluate_indices(model, data, &indices, threads)
}

/// Eval-mode accuracy and confusion matrix over explicit record indices.
///
/// With `threads > 1` the records are processed in disjoint contiguous
/// chunks; merging counts is order-independent, so the result is identical
/// to the single-threaded one.
pub fn evaluate_indices(
    model: &EpilNet<f32>,
    data: &EegDataset,
    indices: &[usize],
    threads: usize,
) -> Result<(f64, ConfusionMatrix), TrainError> {
    if model.class_count() != data.mapping.class_count() {
        return Err(TrainError::ClassCountMismatch {
            model: model.class_count(),
            data: data.mapping.class_count(),
        });
    }
    let norm = data.norm.ok_or(TrainError::MissingNorm)?;
    let class_names = data.mapping.class_names();

    let threads = threads.max(1).min(indices.len().max(1));
    let chunk_size = indices.len().div_ceil(threads);
    let chunks: Vec<&[usize]> = indices.chunks(chunk_size.max(1)).collect();

    let partials: Vec<Result<(u64, ConfusionMatrix), TrainError>> = if threads == 1 {
        chunks
            .into_iter()
            .map(|c| evaluate_chunk(model, data, &norm, class_names.clone(), c))
            .collect()
    } else {
        std::thread::scope(|scope| {
            let handles: Vec<_> = chunks
                .into_iter()
                .map(|chunk| {
                    let names = class_names.clone();
                    scope.spawn(move || evaluate_chunk(model, data, &norm, names, chunk))
                })
                .collect();
            handles.into_iter().map(|h| h.join().expect("eval worker")).collect()
        })
    };

    let mut matrix = ConfusionMatrix::new(class_names);
    let mut correct = 0u64;
    for partial in partials {
        let (c, m) = partial?;
        correct += c;
        matrix.merge(&m);
    }
    let accuracy = correct as f64 / indices.len() as f64;
    debug_assert_eq!(accuracy, matrix.accuracy());
    Ok((accuracy, matrix))
}

fn evaluate_chunk(
    model: &EpilNet<f32>,
    data: &EegDataset,
    norm: &crate::data::NormStats,
    class_names: Vec<String>,
    indices: &[usize],
) -> Result<(u64, ConfusionMatrix), TrainError> {
    const EVAL_BATCH: usize = 128;
    let class_count = model.class_count();
    let mut matrix = ConfusionMatrix::new(class_names);
    let mut correct = 0u64;

    for chunk in indices.chunks(EVAL_BATCH) {
        let mut values = Vec::with_capacity(chunk.len() * INPUT_LENGTH);
        for &i in chunk {
            values.extend_from_slice(&normalize(&data.records[i].samples, norm));
        }
        let x = SignalTensor::from_values(chunk.len(), 1, INPUT_LENGTH, values)
            .expect("batch assembly");
        let logits = model.forward_eval(&x)?;
        for (row, &i) in chunk.iter().enumerate() {
            let row_logits: Vec<f32> = (0..class_count).map(|c| logits.at(row, c, 0)).collect();
            let predicted = argmax_lowest(&row_logits);
            let target = data.targets[i];
            matrix.record(target, predicted);
            if predicted == target {
                correct += 1;
            }
        }
    }
    Ok((correct, matrix))
}

/// Render the per-epoch accuracy curve as CSV with a best-epoch marker
/// column. Wall times are deliberately excluded.
pub fn accuracy_curve_csv(reports: &[EpochReport], best_epoch: usize) -> String {
    let mut out = String::from("epoch,train_acc,val_acc,best\n");
    for r in reports {
        out.push_str(&format!(
            "{},{:.6},{:.6},{}\n",
            r.epoch,
            r.train_accuracy,
            r.val_accuracy,
            u8::from(r.epoch == best_epoch)
        ));
    }
    out
}
