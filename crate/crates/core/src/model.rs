//! The EpilNet graph: a 1D residual network over 178-sample EEG windows.
//!
//! Layout: stem convolution (1 -> width, kernel 7, stride 2, padding 3),
//! batch norm, ReLU, max pool (3/2/1), then four stages of basic blocks
//! repeated (3, 3, 4, 4) times at widths (64, 128, 256, 512) scaled by a
//! width multiplier. The first block of stages 2-4 downsamples with stride
//! 2 and carries a 1x1 projection on the skip path. A global average pool
//! feeds a dense head (width -> width with ReLU, then width -> classes).
//!
//! The temporal trace on a 178-sample input is
//! 178 -> 89 -> 45 -> 45 -> 23 -> 12 -> 6 -> 1.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::NormStats;
use crate::layers::{
    batchnorm1d_backward, batchnorm1d_eval, batchnorm1d_train, conv1d_backward, conv1d_forward,
    dense_backward, dense_forward, global_avg_pool, global_avg_pool_backward, maxpool1d,
    maxpool1d_backward, relu, relu_backward, softmax, BatchNormCache, BatchNormSpec, ConvSpec,
    DenseSpec, LayerError, PoolSpec,
};
use crate::tensor::{Real, SignalTensor};

/// Temporal window length the network accepts.
pub const INPUT_LENGTH: usize = 178;
/// How often each stage's basic block repeats.
pub const STAGE_REPEATS: [usize; 4] = [3, 3, 4, 4];
/// Stage widths before the width multiplier is applied.
pub const STAGE_BASE_WIDTHS: [usize; 4] = [64, 128, 256, 512];

const STEM_KERNEL: usize = 7;
const STEM_STRIDE: usize = 2;
const STEM_PADDING: usize = 3;
const BLOCK_KERNEL: usize = 3;
const BLOCK_PADDING: usize = 1;

#[derive(Debug, Error, PartialEq)]
pub enum ModelError {
    #[error("class count must be at least 2, got {class_count}")]
    TooFewClasses { class_count: usize },
    #[error("width multiplier must be positive and finite, got {width_multiplier}")]
    InvalidWidth { width_multiplier: f64 },
    #[error("input must have exactly 1 channel, got {actual}")]
    WrongInputChannels { actual: usize },
    #[error("input length must be {expected}, got {actual}")]
    WrongInputLength { expected: usize, actual: usize },
    #[error("parameter blob holds {actual} values, model needs {expected}")]
    BlobSizeMismatch { expected: usize, actual: usize },
    #[error(transparent)]
    Layer(#[from] LayerError),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub class_count: usize,
    pub width_multiplier: f64,
    pub init_seed: u64,
}

/// Whether a tensor is trained by the optimizer or carried as a running
/// statistic.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TensorKind {
    Param,
    Buffer,
}

/// One named tensor in the serialization/optimization order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub name: String,
    pub shape: Vec<usize>,
    pub offset: usize,
    pub kind: TensorKind,
}

pub struct TensorSlot<'a, T> {
    pub name: String,
    pub kind: TensorKind,
    pub shape: Vec<usize>,
    pub values: &'a [T],
}

pub struct TensorSlotMut<'a, T> {
    pub name: String,
    pub kind: TensorKind,
    pub shape: Vec<usize>,
    pub values: &'a mut Vec<T>,
}

/// Two convolution + batch-norm pairs with ReLU, a skip connection added
/// before the final ReLU, and an optional 1x1 projection on the skip path
/// when shape changes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BasicBlock<T> {
    pub conv1: ConvSpec<T>,
    pub bn1: BatchNormSpec<T>,
    pub conv2: ConvSpec<T>,
    pub bn2: BatchNormSpec<T>,
    pub projection: Option<Projection<T>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Projection<T> {
    pub conv: ConvSpec<T>,
    pub bn: BatchNormSpec<T>,
}

/// Activations recorded by a train-mode block forward pass.
pub struct BlockTape<T> {
    x: SignalTensor<T>,
    n1: SignalTensor<T>,
    r1: SignalTensor<T>,
    n2: SignalTensor<T>,
    sum: SignalTensor<T>,
    bn1: BatchNormCache<T>,
    bn2: BatchNormCache<T>,
    proj_bn: Option<BatchNormCache<T>>,
}

impl<T: Real> BasicBlock<T> {
    /// Build a block with He-normal conv weights drawn from `rng`.
    /// A projection is present exactly when the block changes channel count
    /// or strides.
    pub fn init(
        in_channels: usize,
        out_channels: usize,
        stride: usize,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        let mut conv1 = ConvSpec::zeros(
            in_channels,
            out_channels,
            BLOCK_KERNEL,
            stride,
            BLOCK_PADDING,
        )
        .expect("block conv1 spec");
        he_init(&mut conv1.weights, in_channels * BLOCK_KERNEL, rng);
        let mut conv2 = ConvSpec::zeros(out_channels, out_channels, BLOCK_KERNEL, 1, BLOCK_PADDING)
            .expect("block conv2 spec");
        he_init(&mut conv2.weights, out_channels * BLOCK_KERNEL, rng);

        let projection = if in_channels != out_channels || stride != 1 {
            let mut conv =
                ConvSpec::zeros(in_channels, out_channels, 1, stride, 0).expect("projection spec");
            he_init(&mut conv.weights, in_channels, rng);
            Some(Projection {
                conv,
                bn: BatchNormSpec::identity(out_channels),
            })
        } else {
            None
        };

        Self {
            conv1,
            bn1: BatchNormSpec::identity(out_channels),
            conv2,
            bn2: BatchNormSpec::identity(out_channels),
            projection,
        }
    }

    pub fn forward_eval(&self, x: &SignalTensor<T>) -> Result<SignalTensor<T>, LayerError> {
        let r1 = relu(&batchnorm1d_eval(&conv1d_forward(x, &self.conv1)?, &self.bn1)?);
        let r2 = relu(&batchnorm1d_eval(&conv1d_forward(&r1, &self.conv2)?, &self.bn2)?);
        let skip = match &self.projection {
            Some(p) => batchnorm1d_eval(&conv1d_forward(x, &p.conv)?, &p.bn)?,
            None => x.clone(),
        };
        Ok(relu(&add(&r2, &skip)))
    }

    pub fn forward_train(
        &mut self,
        x: SignalTensor<T>,
    ) -> Result<(SignalTensor<T>, BlockTape<T>), LayerError> {
        let c1 = conv1d_forward(&x, &self.conv1)?;
        let (n1, bn1) = batchnorm1d_train(&c1, &mut self.bn1)?;
        let r1 = relu(&n1);
        let c2 = conv1d_forward(&r1, &self.conv2)?;
        let (n2, bn2) = batchnorm1d_train(&c2, &mut self.bn2)?;
        let r2 = relu(&n2);
        let (skip, proj_bn) = match &mut self.projection {
            Some(p) => {
                let pc = conv1d_forward(&x, &p.conv)?;
                let (pn, cache) = batchnorm1d_train(&pc, &mut p.bn)?;
                (pn, Some(cache))
            }
            None => (x.clone(), None),
        };
        let sum = add(&r2, &skip);
        let out = relu(&sum);
        Ok((
            out,
            BlockTape {
                x,
                n1,
                r1,
                n2,
                sum,
                bn1,
                bn2,
                proj_bn,
            },
        ))
    }

    /// Backpropagate through the block, writing parameter gradients into the
    /// matching fields of `grads` and returning the gradient w.r.t. the
    /// block input.
    pub fn backward(
        &self,
        tape: &BlockTape<T>,
        upstream: &SignalTensor<T>,
        grads: &mut BasicBlock<T>,
    ) -> Result<SignalTensor<T>, LayerError> {
        let d_sum = relu_backward(&tape.sum, upstream);
        // The addition fans the gradient out to both the main path and the
        // skip path unchanged.
        let d_n2 = relu_backward(&tape.n2, &d_sum);
        let g_bn2 = batchnorm1d_backward(&tape.bn2, &self.bn2, &d_n2)?;
        let g_conv2 = conv1d_backward(&tape.r1, &self.conv2, &g_bn2.input)?;
        let d_n1 = relu_backward(&tape.n1, &g_conv2.input);
        let g_bn1 = batchnorm1d_backward(&tape.bn1, &self.bn1, &d_n1)?;
        let g_conv1 = conv1d_backward(&tape.x, &self.conv1, &g_bn1.input)?;

        grads.bn2.gamma = g_bn2.gamma;
        grads.bn2.beta = g_bn2.beta;
        grads.conv2.weights = g_conv2.weights;
        grads.conv2.bias = g_conv2.bias;
        grads.bn1.gamma = g_bn1.gamma;
        grads.bn1.beta = g_bn1.beta;
        grads.conv1.weights = g_conv1.weights;
        grads.conv1.bias = g_conv1.bias;

        let mut d_x = g_conv1.input;
        match (&self.projection, &tape.proj_bn) {
            (Some(p), Some(cache)) => {
                let g_pbn = batchnorm1d_backward(cache, &p.bn, &d_sum)?;
                let g_pconv = conv1d_backward(&tape.x, &p.conv, &g_pbn.input)?;
                let gp = grads
                    .projection
                    .as_mut()
                    .expect("gradient block shape mirrors the model");
                gp.bn.gamma = g_pbn.gamma;
                gp.bn.beta = g_pbn.beta;
                gp.conv.weights = g_pconv.weights;
                gp.conv.bias = g_pconv.bias;
                add_into(&mut d_x, &g_pconv.input);
            }
            (None, None) => add_into(&mut d_x, &d_sum),
            _ => unreachable!("projection and its cache always appear together"),
        }
        Ok(d_x)
    }

    /// Same-shaped block with every tensor zeroed, used as a gradient
    /// holder in standalone block checks.
    pub fn zeroed_clone(&self) -> Self {
        let mut clone = self.clone();
        for slot in clone.slots_mut() {
            slot.values.iter_mut().for_each(|v| *v = T::zero());
        }
        clone
    }

    /// All tensors of this block in traversal order.
    pub fn slots(&self) -> Vec<TensorSlot<'_, T>> {
        let mut out = Vec::new();
        self.push_slots("block", &mut out);
        out
    }

    pub fn slots_mut(&mut self) -> Vec<TensorSlotMut<'_, T>> {
        let mut out = Vec::new();
        self.push_slots_mut("block", &mut out);
        out
    }

    /// Trainable tensors only (no running statistics).
    pub fn param_slots(&self) -> Vec<TensorSlot<'_, T>> {
        let mut out = self.slots();
        out.retain(|s| s.kind == TensorKind::Param);
        out
    }

    pub fn param_slots_mut(&mut self) -> Vec<TensorSlotMut<'_, T>> {
        let mut out = self.slots_mut();
        out.retain(|s| s.kind == TensorKind::Param);
        out
    }

    fn push_slots<'a>(&'a self, prefix: &str, out: &mut Vec<TensorSlot<'a, T>>) {
        push_conv(out, &format!("{prefix}.conv1"), &self.conv1);
        push_bn(out, &format!("{prefix}.bn1"), &self.bn1);
        push_conv(out, &format!("{prefix}.conv2"), &self.conv2);
        push_bn(out, &format!("{prefix}.bn2"), &self.bn2);
        if let Some(p) = &self.projection {
            push_conv(out, &format!("{prefix}.proj.conv"), &p.conv);
            push_bn(out, &format!("{prefix}.proj.bn"), &p.bn);
        }
    }

    fn push_slots_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<TensorSlotMut<'a, T>>) {
        push_conv_mut(out, &format!("{prefix}.conv1"), &mut self.conv1);
        push_bn_mut(out, &format!("{prefix}.bn1"), &mut self.bn1);
        push_conv_mut(out, &format!("{prefix}.conv2"), &mut self.conv2);
        push_bn_mut(out, &format!("{prefix}.bn2"), &mut self.bn2);
        if let Some(p) = &mut self.projection {
            push_conv_mut(out, &format!("{prefix}.proj.conv"), &mut p.conv);
            push_bn_mut(out, &format!("{prefix}.proj.bn"), &mut p.bn);
        }
    }
}

/// The assembled network.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpilNet<T> {
    pub config: ModelConfig,
    pub stage_widths: [usize; 4],
    pub stem: ConvSpec<T>,
    pub stem_bn: BatchNormSpec<T>,
    pub pool: PoolSpec,
    pub stages: Vec<Vec<BasicBlock<T>>>,
    pub head_hidden: DenseSpec<T>,
    pub head_out: DenseSpec<T>,
}

/// Activations recorded by a train-mode full forward pass.
pub struct ForwardTape<T> {
    input: SignalTensor<T>,
    stem_n: SignalTensor<T>,
    stem_r_shape: (usize, usize, usize),
    pool_argmax: Vec<usize>,
    pool_out_shape: (usize, usize, usize),
    stem_bn: BatchNormCache<T>,
    blocks: Vec<Vec<BlockTape<T>>>,
    gap_in_shape: (usize, usize, usize),
    gap_out: SignalTensor<T>,
    hidden: SignalTensor<T>,
    hidden_r: SignalTensor<T>,
}

/// Build the network with deterministic He-normal initialization.
///
/// `width_multiplier` scales every stage width (1.0 reproduces the full
/// 64/128/256/512 layout; 0.25 gives 16/32/64/128 for smoke runs).
pub fn build_epilnet<T: Real>(
    class_count: usize,
    width_multiplier: f64,
    init_seed: u64,
) -> Result<EpilNet<T>, ModelError> {
    if class_count < 2 {
        return Err(ModelError::TooFewClasses { class_count });
    }
    if !(width_multiplier.is_finite() && width_multiplier > 0.0) {
        return Err(ModelError::InvalidWidth { width_multiplier });
    }

    let widths: [usize; 4] = STAGE_BASE_WIDTHS
        .map(|w| (((w as f64) * width_multiplier).round() as usize).max(1));
    let mut rng = ChaCha8Rng::seed_from_u64(init_seed);

    let mut stem = ConvSpec::zeros(1, widths[0], STEM_KERNEL, STEM_STRIDE, STEM_PADDING)
        .expect("stem spec");
    he_init(&mut stem.weights, STEM_KERNEL, &mut rng);
    let stem_bn = BatchNormSpec::identity(widths[0]);

    let mut stages = Vec::with_capacity(4);
    let mut in_channels = widths[0];
    for (stage_idx, (&repeat, &width)) in STAGE_REPEATS.iter().zip(widths.iter()).enumerate() {
        let mut blocks = Vec::with_capacity(repeat);
        for block_idx in 0..repeat {
            // Only the first block of stages 2-4 downsamples.
            let stride = if stage_idx > 0 && block_idx == 0 { 2 } else { 1 };
            blocks.push(BasicBlock::init(in_channels, width, stride, &mut rng));
            in_channels = width;
        }
        stages.push(blocks);
    }

    let mut head_hidden = DenseSpec::zeros(widths[3], widths[3]);
    he_init(&mut head_hidden.weights, widths[3], &mut rng);
    let mut head_out = DenseSpec::zeros(widths[3], class_count);
    he_init(&mut head_out.weights, widths[3], &mut rng);

    Ok(EpilNet {
        config: ModelConfig {
            class_count,
            width_multiplier,
            init_seed,
        },
        stage_widths: widths,
        stem,
        stem_bn,
        pool: PoolSpec::default(),
        stages,
        head_hidden,
        head_out,
    })
}

/// He-normal draw: samples in f64 for a bit-identical stream across f32 and
/// f64 builds, then casts.
fn he_init<T: Real>(weights: &mut [T], fan_in: usize, rng: &mut ChaCha8Rng) {
    let std = (2.0 / fan_in as f64).sqrt();
    let normal = Normal::new(0.0, std).expect("std is finite and positive");
    for w in weights {
        *w = T::from_f64(normal.sample(rng));
    }
}

impl<T: Real> EpilNet<T> {
    pub fn class_count(&self) -> usize {
        self.config.class_count
    }

    fn validate_input(&self, x: &SignalTensor<T>) -> Result<(), ModelError> {
        if x.channels() != 1 {
            return Err(ModelError::WrongInputChannels {
                actual: x.channels(),
            });
        }
        if x.length() != INPUT_LENGTH {
            return Err(ModelError::WrongInputLength {
                expected: INPUT_LENGTH,
                actual: x.length(),
            });
        }
        Ok(())
    }

    /// Eval-mode forward pass. Deterministic and side-effect free; returns
    /// raw logits of shape `(batch, class_count, 1)`.
    pub fn forward_eval(&self, x: &SignalTensor<T>) -> Result<SignalTensor<T>, ModelError> {
        self.validate_input(x)?;
        let stem_r = relu(&batchnorm1d_eval(
            &conv1d_forward(x, &self.stem)?,
            &self.stem_bn,
        )?);
        let mut cur = maxpool1d(&stem_r, self.pool)?.output;
        for stage in &self.stages {
            for block in stage {
                cur = block.forward_eval(&cur)?;
            }
        }
        let pooled = global_avg_pool(&cur)?;
        let hidden = relu(&dense_forward(&pooled, &self.head_hidden)?);
        Ok(dense_forward(&hidden, &self.head_out)?)
    }

    /// Train-mode forward pass: batch-norm batch statistics, running-stat
    /// updates, and a tape for [`EpilNet::backward`].
    pub fn forward_train(
        &mut self,
        x: SignalTensor<T>,
    ) -> Result<(SignalTensor<T>, ForwardTape<T>), ModelError> {
        self.validate_input(&x)?;
        let stem_c = conv1d_forward(&x, &self.stem)?;
        let (stem_n, stem_bn) = batchnorm1d_train(&stem_c, &mut self.stem_bn)?;
        let stem_r = relu(&stem_n);
        let stem_r_shape = stem_r.shape();
        let pooled = maxpool1d(&stem_r, self.pool)?;
        let pool_out_shape = pooled.output.shape();

        let mut cur = pooled.output;
        let mut blocks = Vec::with_capacity(self.stages.len());
        for stage in &mut self.stages {
            let mut tapes = Vec::with_capacity(stage.len());
            for block in stage {
                let (next, tape) = block.forward_train(cur)?;
                tapes.push(tape);
                cur = next;
            }
            blocks.push(tapes);
        }

        let gap_in_shape = cur.shape();
        let gap_out = global_avg_pool(&cur)?;
        let hidden = dense_forward(&gap_out, &self.head_hidden)?;
        let hidden_r = relu(&hidden);
        let logits = dense_forward(&hidden_r, &self.head_out)?;

        Ok((
            logits,
            ForwardTape {
                input: x,
                stem_n,
                stem_r_shape,
                pool_argmax: pooled.argmax,
                pool_out_shape,
                stem_bn,
                blocks,
                gap_in_shape,
                gap_out,
                hidden,
                hidden_r,
            },
        ))
    }

    /// Backpropagate `d_logits` through the tape, writing parameter
    /// gradients into `grads` (a zeroed clone of this model).
    pub fn backward(
        &self,
        tape: &ForwardTape<T>,
        d_logits: &SignalTensor<T>,
        grads: &mut EpilNet<T>,
    ) -> Result<(), ModelError> {
        let g_out = dense_backward(&tape.hidden_r, &self.head_out, d_logits)?;
        grads.head_out.weights = g_out.weights;
        grads.head_out.bias = g_out.bias;

        let d_hidden = relu_backward(&tape.hidden, &g_out.input);
        let g_hidden = dense_backward(&tape.gap_out, &self.head_hidden, &d_hidden)?;
        grads.head_hidden.weights = g_hidden.weights;
        grads.head_hidden.bias = g_hidden.bias;

        let mut d_cur = global_avg_pool_backward(tape.gap_in_shape, &g_hidden.input)?;
        for (stage_idx, stage) in self.stages.iter().enumerate().rev() {
            for (block_idx, block) in stage.iter().enumerate().rev() {
                d_cur = block.backward(
                    &tape.blocks[stage_idx][block_idx],
                    &d_cur,
                    &mut grads.stages[stage_idx][block_idx],
                )?;
            }
        }

        let d_stem_r = maxpool1d_backward(tape.stem_r_shape, &tape.pool_argmax, &d_cur)?;
        debug_assert_eq!(d_cur.shape(), tape.pool_out_shape);
        let d_stem_n = relu_backward(&tape.stem_n, &d_stem_r);
        let g_bn = batchnorm1d_backward(&tape.stem_bn, &self.stem_bn, &d_stem_n)?;
        grads.stem_bn.gamma = g_bn.gamma;
        grads.stem_bn.beta = g_bn.beta;
        let g_stem = conv1d_backward(&tape.input, &self.stem, &g_bn.input)?;
        grads.stem.weights = g_stem.weights;
        grads.stem.bias = g_stem.bias;
        Ok(())
    }

    /// Classify one window: normalization, eval forward, softmax. Ties in
    /// the argmax resolve toward the lowest class index.
    pub fn predict(
        &self,
        window: &[T],
        norm: &NormStats,
    ) -> Result<(usize, Vec<T>), ModelError> {
        if window.len() != INPUT_LENGTH {
            return Err(ModelError::WrongInputLength {
                expected: INPUT_LENGTH,
                actual: window.len(),
            });
        }
        let mean = T::from_f64(norm.mean);
        let inv_std = T::from_f64(1.0 / norm.std);
        let values: Vec<T> = window.iter().map(|&v| (v - mean) * inv_std).collect();
        let x = SignalTensor::from_values(1, 1, INPUT_LENGTH, values)
            .expect("window length checked above");
        let logits = self.forward_eval(&x)?;
        let probabilities = softmax(logits.values());
        Ok((argmax_lowest(&probabilities), probabilities))
    }

    /// Temporal lengths after the stem, the max pool, and each stage, for a
    /// given input length.
    pub fn temporal_trace(&self, input_length: usize) -> Result<Vec<usize>, ModelError> {
        let mut trace = Vec::new();
        let mut len = self
            .stem
            .output_length(input_length)
            .ok_or(LayerError::EmptyOutput {
                length: input_length,
                kernel: self.stem.kernel,
                stride: self.stem.stride,
                padding: self.stem.padding,
            })
            .map_err(ModelError::Layer)?;
        trace.push(len);
        len = crate::layers::conv1d_output_length(len, self.pool.kernel, self.pool.stride, self.pool.padding)
            .ok_or(ModelError::Layer(LayerError::EmptyInput))?;
        trace.push(len);
        for stage in &self.stages {
            for block in stage {
                len = block
                    .conv1
                    .output_length(len)
                    .ok_or(ModelError::Layer(LayerError::EmptyInput))?;
            }
            trace.push(len);
        }
        Ok(trace)
    }

    /// All tensors in serialization order.
    pub fn tensor_slots(&self) -> Vec<TensorSlot<'_, T>> {
        let mut out = Vec::new();
        push_conv(&mut out, "stem.conv", &self.stem);
        push_bn(&mut out, "stem.bn", &self.stem_bn);
        for (si, stage) in self.stages.iter().enumerate() {
            for (bi, block) in stage.iter().enumerate() {
                block.push_slots(&format!("stage{}.block{}", si + 1, bi), &mut out);
            }
        }
        push_dense(&mut out, "head.fc1", &self.head_hidden);
        push_dense(&mut out, "head.fc2", &self.head_out);
        out
    }

    /// Mutable view of all tensors, same order as [`EpilNet::tensor_slots`].
    pub fn tensor_slots_mut(&mut self) -> Vec<TensorSlotMut<'_, T>> {
        let mut out = Vec::new();
        push_conv_mut(&mut out, "stem.conv", &mut self.stem);
        push_bn_mut(&mut out, "stem.bn", &mut self.stem_bn);
        for (si, stage) in self.stages.iter_mut().enumerate() {
            for (bi, block) in stage.iter_mut().enumerate() {
                block.push_slots_mut(&format!("stage{}.block{}", si + 1, bi), &mut out);
            }
        }
        push_dense_mut(&mut out, "head.fc1", &mut self.head_hidden);
        push_dense_mut(&mut out, "head.fc2", &mut self.head_out);
        out
    }

    /// Ordered (name, shape, offset) description of every tensor. Offsets
    /// index into the flat blob produced by [`EpilNet::gather_values`].
    pub fn param_manifest(&self) -> Vec<ManifestEntry> {
        let mut offset = 0;
        self.tensor_slots()
            .into_iter()
            .map(|slot| {
                let entry = ManifestEntry {
                    name: slot.name,
                    shape: slot.shape,
                    offset,
                    kind: slot.kind,
                };
                offset += slot.values.len();
                entry
            })
            .collect()
    }

    /// Total number of values across all tensors (params + buffers).
    pub fn total_value_count(&self) -> usize {
        self.tensor_slots().iter().map(|s| s.values.len()).sum()
    }

    /// Number of trainable parameters.
    pub fn trainable_parameter_count(&self) -> usize {
        self.tensor_slots()
            .iter()
            .filter(|s| s.kind == TensorKind::Param)
            .map(|s| s.values.len())
            .sum()
    }

    /// Sizes of trainable tensors in traversal order, for optimizer state.
    pub fn trainable_slot_sizes(&self) -> Vec<usize> {
        self.tensor_slots()
            .iter()
            .filter(|s| s.kind == TensorKind::Param)
            .map(|s| s.values.len())
            .collect()
    }

    /// Flatten every tensor (params and buffers) into one blob in manifest
    /// order.
    pub fn gather_values(&self) -> Vec<T> {
        let mut out = Vec::with_capacity(self.total_value_count());
        for slot in self.tensor_slots() {
            out.extend_from_slice(slot.values);
        }
        out
    }

    /// Load a blob produced by [`EpilNet::gather_values`] into this model.
    pub fn scatter_values(&mut self, blob: &[T]) -> Result<(), ModelError> {
        let expected = self.total_value_count();
        if blob.len() != expected {
            return Err(ModelError::BlobSizeMismatch {
                expected,
                actual: blob.len(),
            });
        }
        let mut offset = 0;
        for slot in self.tensor_slots_mut() {
            let n = slot.values.len();
            slot.values.copy_from_slice(&blob[offset..offset + n]);
            offset += n;
        }
        Ok(())
    }

    /// A same-shaped model with every tensor zeroed, used as a gradient
    /// holder.
    pub fn zeros_like(&self) -> Self {
        let mut clone = self.clone();
        for slot in clone.tensor_slots_mut() {
            slot.values.iter_mut().for_each(|v| *v = T::zero());
        }
        clone
    }

    /// Convert element type; used to run the same weights in f64 for
    /// gradient checking.
    pub fn cast<U: Real>(&self) -> EpilNet<U> {
        let mut target: EpilNet<U> = build_epilnet(
            self.config.class_count,
            self.config.width_multiplier,
            self.config.init_seed,
        )
        .expect("source model was buildable");
        let blob: Vec<U> = self
            .gather_values()
            .into_iter()
            .map(|v| U::from_f64(v.to_f64()))
            .collect();
        target
            .scatter_values(&blob)
            .expect("identical architecture");
        target
    }
}

/// Argmax with ties resolved toward the lowest index.
pub fn argmax_lowest<T: Real>(values: &[T]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

fn add<T: Real>(a: &SignalTensor<T>, b: &SignalTensor<T>) -> SignalTensor<T> {
    debug_assert_eq!(a.shape(), b.shape(), "skip addition needs equal shapes");
    let mut out = a.clone();
    add_into(&mut out, b);
    out
}

fn add_into<T: Real>(acc: &mut SignalTensor<T>, rhs: &SignalTensor<T>) {
    debug_assert_eq!(acc.shape(), rhs.shape());
    for (a, &b) in acc.values_mut().iter_mut().zip(rhs.values()) {
        *a += b;
    }
}

fn push_conv<'a, T>(out: &mut Vec<TensorSlot<'a, T>>, prefix: &str, spec: &'a ConvSpec<T>) {
    out.push(TensorSlot {
        name: format!("{prefix}.weight"),
        kind: TensorKind::Param,
        shape: vec![spec.out_channels, spec.in_channels, spec.kernel],
        values: &spec.weights,
    });
    out.push(TensorSlot {
        name: format!("{prefix}.bias"),
        kind: TensorKind::Param,
        shape: vec![spec.out_channels],
        values: &spec.bias,
    });
}

fn push_conv_mut<'a, T>(
    out: &mut Vec<TensorSlotMut<'a, T>>,
    prefix: &str,
    spec: &'a mut ConvSpec<T>,
) {
    out.push(TensorSlotMut {
        name: format!("{prefix}.weight"),
        kind: TensorKind::Param,
        shape: vec![spec.out_channels, spec.in_channels, spec.kernel],
        values: &mut spec.weights,
    });
    out.push(TensorSlotMut {
        name: format!("{prefix}.bias"),
        kind: TensorKind::Param,
        shape: vec![spec.out_channels],
        values: &mut spec.bias,
    });
}

fn push_bn<'a, T>(out: &mut Vec<TensorSlot<'a, T>>, prefix: &str, spec: &'a BatchNormSpec<T>) {
    out.push(TensorSlot {
        name: format!("{prefix}.gamma"),
        kind: TensorKind::Param,
        shape: vec![spec.channels],
        values: &spec.gamma,
    });
    out.push(TensorSlot {
        name: format!("{prefix}.beta"),
        kind: TensorKind::Param,
        shape: vec![spec.channels],
        values: &spec.beta,
    });
    out.push(TensorSlot {
        name: format!("{prefix}.running_mean"),
        kind: TensorKind::Buffer,
        shape: vec![spec.channels],
        values: &spec.running_mean,
    });
    out.push(TensorSlot {
        name: format!("{prefix}.running_var"),
        kind: TensorKind::Buffer,
        shape: vec![spec.channels],
        values: &spec.running_var,
    });
}

fn push_bn_mut<'a, T>(
    out: &mut Vec<TensorSlotMut<'a, T>>,
    prefix: &str,
    spec: &'a mut BatchNormSpec<T>,
) {
    out.push(TensorSlotMut {
        name: format!("{prefix}.gamma"),
        kind: TensorKind::Param,
        shape: vec![spec.channels],
        values: &mut spec.gamma,
    });
    out.push(TensorSlotMut {
        name: format!("{prefix}.beta"),
        kind: TensorKind::Param,
        shape: vec![spec.channels],
        values: &mut spec.beta,
    });
    out.push(TensorSlotMut {
        name: format!("{prefix}.running_mean"),
        kind: TensorKind::Buffer,
        shape: vec![spec.channels],
        values: &mut spec.running_mean,
    });
    out.push(TensorSlotMut {
        name: format!("{prefix}.running_var"),
        kind: TensorKind::Buffer,
        shape: vec![spec.channels],
        values: &mut spec.running_var,
    });
}

fn push_dense<'a, T>(out: &mut Vec<TensorSlot<'a, T>>, prefix: &str, spec: &'a DenseSpec<T>) {
    out.push(TensorSlot {
        name: format!("{prefix}.weight"),
        kind: TensorKind::Param,
        shape: vec![spec.out_features, spec.in_features],
        values: &spec.weights,
    });
    out.push(TensorSlot {
        name: format!("{prefix}.bias"),
        kind: TensorKind::Param,
        shape: vec![spec.out_features],
        values: &spec.bias,
    });
}

fn push_dense_mut<'a, T>(
    out: &mut Vec<TensorSlotMut<'a, T>>,
    prefix: &str,
    spec: &'a mut DenseSpec<T>,
) {
    out.push(TensorSlotMut {
        name: format!("{prefix}.weight"),
        kind: TensorKind::Param,
        shape: vec![spec.out_features, spec.in_features],
        values: &mut spec.weights,
    });
    out.push(TensorSlotMut {
        name: format!("{prefix}.bias"),
        kind: TensorKind::Param,
        shape: vec![spec.out_features],
        values: &mut spec.bias,
    });
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn full_width_layout() {
        let model = build_epilnet::<f32>(5, 1.0, 42).unwrap();
        assert_eq!(model.stage_widths, [64, 128, 256, 512]);
        let repeats: Vec<usize> = model.stages.iter().map(Vec::len).collect();
        assert_eq!(repeats, vec![3, 3, 4, 4]);
        // Exactly the first blocks of stages 2-4 downsample and project.
        for (si, stage) in model.stages.iter().enumerate() {
            for (bi, block) in stage.iter().enumerate() {
                let downsamples = si > 0 && bi == 0;
                assert_eq!(block.conv1.stride, if downsamples { 2 } else { 1 });
                assert_eq!(block.projection.is_some(), downsamples);
                assert_eq!(block.conv2.stride, 1);
                assert_eq!(block.conv1.kernel, 3);
                assert_eq!(block.conv1.padding, 1);
            }
        }
    }

    #[test]
    fn quarter_width_layout() {
        let model = build_epilnet::<f32>(3, 0.25, 7).unwrap();
        assert_eq!(model.stage_widths, [16, 32, 64, 128]);
        let repeats: Vec<usize> = model.stages.iter().map(Vec::len).collect();
        assert_eq!(repeats, vec![3, 3, 4, 4]);
    }

    #[test]
    fn same_seed_is_bit_identical() {
        let a = build_epilnet::<f32>(5, 0.25, 1234).unwrap();
        let b = build_epilnet::<f32>(5, 0.25, 1234).unwrap();
        assert_eq!(a.gather_values(), b.gather_values());
        let c = build_epilnet::<f32>(5, 0.25, 1235).unwrap();
        assert_ne!(a.gather_values(), c.gather_values());
    }

    #[test]
    fn class_count_below_two_is_rejected() {
        assert_eq!(
            build_epilnet::<f32>(1, 1.0, 0).unwrap_err(),
            ModelError::TooFewClasses { class_count: 1 }
        );
    }

    #[test]
    fn temporal_trace_matches_length_formula() {
        let model = build_epilnet::<f32>(5, 0.125, 0).unwrap();
        assert_eq!(
            model.temporal_trace(INPUT_LENGTH).unwrap(),
            vec![89, 45, 45, 23, 12, 6]
        );
    }

    #[test]
    fn eval_forward_is_deterministic() {
        let model = build_epilnet::<f32>(3, 0.125, 9).unwrap();
        let x = SignalTensor::from_values(
            2,
            1,
            INPUT_LENGTH,
            (0..2 * INPUT_LENGTH).map(|i| (i as f32 * 0.1).sin()).collect(),
        )
        .unwrap();
        let a = model.forward_eval(&x).unwrap();
        let b = model.forward_eval(&x).unwrap();
        assert_eq!(a.values(), b.values());
        assert_eq!(a.shape(), (2, 3, 1));
    }

    #[test]
    fn wrong_input_length_is_reported() {
        let model = build_epilnet::<f32>(3, 0.125, 9).unwrap();
        let x = SignalTensor::<f32>::zeros(1, 1, 177);
        assert_eq!(
            model.forward_eval(&x).unwrap_err(),
            ModelError::WrongInputLength {
                expected: 178,
                actual: 177
            }
        );
    }

    #[test]
    fn constant_logits_when_everything_is_zero_except_final_bias() {
        let mut model = build_epilnet::<f32>(4, 0.125, 3).unwrap();
        let zeros = vec![0.0f32; model.total_value_count()];
        model.scatter_values(&zeros).unwrap();
        // Running variance zero would divide by sqrt(eps); keep it at one.
        for slot in model.tensor_slots_mut() {
            if slot.name.ends_with("running_var") {
                slot.values.iter_mut().for_each(|v| *v = 1.0);
            }
        }
        model.head_out.bias = vec![0.5, -1.0, 2.0, 0.25];
        let x = SignalTensor::from_values(
            1,
            1,
            INPUT_LENGTH,
            (0..INPUT_LENGTH).map(|i| (i as f32 * 0.3).cos()).collect(),
        )
        .unwrap();
        let logits = model.forward_eval(&x).unwrap();
        assert_eq!(logits.values(), &[0.5, -1.0, 2.0, 0.25]);
    }

    #[test]
    fn residual_identity_when_second_bn_gamma_is_zero() {
        // A block with identity skip and bn2 gamma forced to zero computes
        // relu(input) exactly.
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut block = BasicBlock::<f64>::init(8, 8, 1, &mut rng);
        block.bn2.gamma = vec![0.0; 8];
        let x = SignalTensor::from_values(
            2,
            8,
            10,
            (0..160).map(|i| ((i as f64) * 0.37).sin() * 2.0).collect(),
        )
        .unwrap();
        let y = block.forward_train(x.clone()).unwrap().0;
        let expected = relu(&x);
        for (a, b) in y.values().iter().zip(expected.values()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn manifest_offsets_cover_the_blob() {
        let model = build_epilnet::<f32>(5, 0.25, 2).unwrap();
        let manifest = model.param_manifest();
        let mut expected_offset = 0;
        for entry in &manifest {
            assert_eq!(entry.offset, expected_offset);
            expected_offset += entry.shape.iter().product::<usize>();
        }
        assert_eq!(expected_offset, model.total_value_count());
        assert_eq!(model.gather_values().len(), expected_offset);
        // Stable naming across identically configured builds.
        let other = build_epilnet::<f32>(5, 0.25, 99).unwrap();
        let names_a: Vec<String> = manifest.into_iter().map(|e| e.name).collect();
        let names_b: Vec<String> =
            other.param_manifest().into_iter().map(|e| e.name).collect();
        assert_eq!(names_a, names_b);
        assert!(names_b.iter().any(|n| n == "stage2.block0.proj.conv.weight"));
    }

    #[test]
    fn full_width_parameter_count() {
        // Hand-derived from the layer shapes: 8,179,333 trainable values
        // for the 5-class full-width model, 8,195,845 including batch-norm
        // running statistics.
        let model = build_epilnet::<f32>(5, 1.0, 0).unwrap();
        assert_eq!(model.trainable_parameter_count(), 8_179_333);
        assert_eq!(model.total_value_count(), 8_195_845);
    }

    #[test]
    fn scatter_roundtrip() {
        let model = build_epilnet::<f32>(3, 0.25, 5).unwrap();
        let blob = model.gather_values();
        let mut rebuilt = build_epilnet::<f32>(3, 0.25, 999).unwrap();
        rebuilt.scatter_values(&blob).unwrap();
        assert_eq!(rebuilt.gather_values(), blob);
        assert!(matches!(
            rebuilt.scatter_values(&blob[1..]),
            Err(ModelError::BlobSizeMismatch { .. })
        ));
    }

    #[test]
    fn argmax_ties_to_lowest_index() {
        assert_eq!(argmax_lowest(&[2.0f64, 2.0, 1.0]), 0);
        assert_eq!(argmax_lowest(&[0.2f64, 0.2, 0.2, 0.2, 0.2]), 0);
        assert_eq!(argmax_lowest(&[1.0f64, 3.0, 3.0]), 1);
    }
}
