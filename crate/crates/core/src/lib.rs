//! EpilNet: a one-dimensional residual convolutional classifier for
//! epileptic-seizure EEG windows, implemented from scratch.
//!
//! The crate covers the full desk-scale pipeline:
//!
//! - [`tensor`]: the dense `(batch, channels, length)` container all layer
//!   math runs on.
//! - [`layers`]: forward/backward implementations of every primitive the
//!   network needs (1D convolution, batch norm, ReLU, max pool, global
//!   average pool, dense, softmax cross-entropy).
//! - [`optim`]: Adam parameter updates.
//! - [`gradcheck`]: central finite-difference oracles for every layer and
//!   for whole blocks/models, in double precision.
//! - [`model`]: the EpilNet graph itself (stem conv, four basic-block
//!   stages repeated 3/3/4/4 at widths 64/128/256/512, dense head).
//! - [`data`]: EEG CSV ingestion, class grouping, stratified splits,
//!   normalization.
//! - [`train`]: the mini-batch training loop with validation-driven best
//!   checkpoint selection, plus evaluation (accuracy + confusion matrix).
//! - [`checkpoint`]: the portable `EPNT1` checkpoint file format.
//! - [`plot`]: SVG rendering of raw EEG windows.
//!
//! All operations are deterministic given their inputs and seeds; training
//! runs with the same seed produce bit-identical parameters.

pub mod checkpoint;
pub mod data;
pub mod gradcheck;
pub mod layers;
pub mod model;
pub mod optim;
pub mod plot;
pub mod synthetic;
pub mod tensor;
pub mod train;

pub use tensor::{Real, SignalTensor};
