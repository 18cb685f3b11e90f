//! Forward and backward implementations of every layer primitive the
//! network uses.
//!
//! All functions are deterministic: the same inputs, parameters, and mode
//! produce bit-identical outputs. Nothing here locks or spawns; tensors can
//! be shared read-only across threads and callers own all mutation.

mod activation;
mod conv;
mod dense;
mod loss;
mod norm;
mod pool;

pub use activation::{relu, relu_backward};
pub use conv::{conv1d_backward, conv1d_forward, conv1d_output_length, ConvGrads, ConvSpec};
pub use dense::{dense_backward, dense_forward, DenseGrads, DenseSpec};
pub use loss::{softmax, softmax_cross_entropy, LossError, SoftmaxCrossEntropy};
pub use norm::{
    batchnorm1d, batchnorm1d_backward, batchnorm1d_eval, batchnorm1d_train, BatchNormCache,
    BatchNormGrads, BatchNormSpec,
};
pub use pool::{
    global_avg_pool, global_avg_pool_backward, maxpool1d, maxpool1d_backward, MaxPoolOutput,
    PoolSpec,
};

use thiserror::Error;

/// Forward or eval pass mode. Train mode uses batch statistics in batch
/// norm and updates running statistics; eval mode reads running statistics.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum LayerError {
    #[error("channel mismatch: layer expects {expected} input channels, input has {actual}")]
    ChannelMismatch { expected: usize, actual: usize },
    #[error("feature mismatch: layer expects {expected} input features, input has {actual}")]
    FeatureMismatch { expected: usize, actual: usize },
    #[error(
        "input length {length} with kernel {kernel}, stride {stride}, padding {padding} \
         produces an empty output"
    )]
    EmptyOutput {
        length: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
    },
    #[error("input has zero temporal length")]
    EmptyInput,
    #[error(
        "upstream gradient shape ({actual_batch}, {actual_channels}, {actual_length}) does not \
         match forward output ({batch}, {channels}, {length})"
    )]
    UpstreamShapeMismatch {
        batch: usize,
        channels: usize,
        length: usize,
        actual_batch: usize,
        actual_channels: usize,
        actual_length: usize,
    },
    #[error(
        "batch norm training statistics over {elements} element(s) per channel are degenerate; \
         at least 2 are required"
    )]
    DegenerateVariance { elements: usize },
    #[error("invalid layer parameters: {reason}")]
    InvalidSpec { reason: String },
}

pub(crate) fn check_upstream<T: crate::tensor::Real>(
    upstream: &crate::tensor::SignalTensor<T>,
    batch: usize,
    channels: usize,
    length: usize,
) -> Result<(), LayerError> {
    if upstream.shape() != (batch, channels, length) {
        let (ab, ac, al) = upstream.shape();
        return Err(LayerError::UpstreamShapeMismatch {
            batch,
            channels,
            length,
            actual_batch: ab,
            actual_channels: ac,
            actual_length: al,
        });
    }
    Ok(())
}
