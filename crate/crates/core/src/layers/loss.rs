//! Softmax with cross-entropy loss, stabilized against overflow by
//! max subtraction.

use thiserror::Error;

use crate::tensor::Real;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum LossError {
    #[error("softmax needs at least 2 classes, got {classes}")]
    TooFewClasses { classes: usize },
    #[error("label {label} out of range for {classes} classes")]
    LabelOutOfRange { label: usize, classes: usize },
}

/// Stabilized softmax probabilities.
pub fn softmax<T: Real>(logits: &[T]) -> Vec<T> {
    let max = logits
        .iter()
        .copied()
        .fold(T::neg_infinity(), |a, b| if b > a { b } else { a });
    let exps: Vec<T> = logits.iter().map(|&l| (l - max).exp()).collect();
    let sum: T = exps.iter().copied().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

#[derive(Clone, Debug)]
pub struct SoftmaxCrossEntropy<T> {
    /// `-ln p[label]`.
    pub loss: T,
    pub probabilities: Vec<T>,
    /// `p - onehot(label)`.
    pub grad_logits: Vec<T>,
}

pub fn softmax_cross_entropy<T: Real>(
    logits: &[T],
    label: usize,
) -> Result<SoftmaxCrossEntropy<T>, LossError> {
    if logits.len() < 2 {
        return Err(LossError::TooFewClasses {
            classes: logits.len(),
        });
    }
    if label >= logits.len() {
        return Err(LossError::LabelOutOfRange {
            label,
            classes: logits.len(),
        });
    }

    let max = logits
        .iter()
        .copied()
        .fold(T::neg_infinity(), |a, b| if b > a { b } else { a });
    let exps: Vec<T> = logits.iter().map(|&l| (l - max).exp()).collect();
    let sum: T = exps.iter().copied().sum();
    let probabilities: Vec<T> = exps.iter().map(|&e| e / sum).collect();

    // loss = logsumexp(logits) - logits[label], exact even when the label
    // probability underflows.
    let loss = sum.ln() + max - logits[label];

    let mut grad_logits = probabilities.clone();
    grad_logits[label] -= T::one();

    Ok(SoftmaxCrossEntropy {
        loss,
        probabilities,
        grad_logits,
    })
}
