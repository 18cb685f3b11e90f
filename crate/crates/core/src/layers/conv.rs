//! 1D convolution with zero padding, forward and backward.

use serde::{Deserialize, Serialize};

use super::{check_upstream, LayerError};
use crate::tensor::{Real, SignalTensor};

/// Output temporal length of a convolution-style window operation:
/// `floor((length + 2*padding - kernel) / stride) + 1`, or `None` when the
/// window does not fit even once.
pub fn conv1d_output_length(
    length: usize,
    kernel: usize,
    stride: usize,
    padding: usize,
) -> Option<usize> {
    let padded = length + 2 * padding;
    if padded < kernel {
        return None;
    }
    Some((padded - kernel) / stride + 1)
}

/// Parameters of a 1D convolution. Weights are laid out
/// `(out_channels, in_channels, kernel)` row-major.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvSpec<T> {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: usize,
    pub stride: usize,
    pub padding: usize,
    pub weights: Vec<T>,
    pub bias: Vec<T>,
}

impl<T: Real> ConvSpec<T> {
    /// Zero-initialized convolution; the model initializer fills weights in.
    pub fn zeros(
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
    ) -> Result<Self, LayerError> {
        if kernel == 0 || stride == 0 || in_channels == 0 || out_channels == 0 {
            return Err(LayerError::InvalidSpec {
                reason: format!(
                    "conv needs kernel >= 1, stride >= 1, channels >= 1 \
                     (kernel {kernel}, stride {stride}, in {in_channels}, out {out_channels})"
                ),
            });
        }
        Ok(Self {
            in_channels,
            out_channels,
            kernel,
            stride,
            padding,
            weights: vec![T::zero(); out_channels * in_channels * kernel],
            bias: vec![T::zero(); out_channels],
        })
    }

    pub fn output_length(&self, input_length: usize) -> Option<usize> {
        conv1d_output_length(input_length, self.kernel, self.stride, self.padding)
    }

    fn validate_input(&self, x: &SignalTensor<T>) -> Result<usize, LayerError> {
        if x.channels() != self.in_channels {
            return Err(LayerError::ChannelMismatch {
                expected: self.in_channels,
                actual: x.channels(),
            });
        }
        self.output_length(x.length())
            .ok_or(LayerError::EmptyOutput {
                length: x.length(),
                kernel: self.kernel,
                stride: self.stride,
                padding: self.padding,
            })
    }
}

/// Dot product with eight independent accumulators so the reduction
/// vectorizes; the summation order is fixed, so results are deterministic.
#[inline]
fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [T::zero(); 8];
    let chunks = a.len() / 8;
    for c in 0..chunks {
        let i = c * 8;
        for (l, acc_l) in acc.iter_mut().enumerate() {
            *acc_l += a[i + l] * b[i + l];
        }
    }
    let mut sum = ((acc[0] + acc[1]) + (acc[2] + acc[3]))
        + ((acc[4] + acc[5]) + (acc[6] + acc[7]));
    for i in chunks * 8..a.len() {
        sum += a[i] * b[i];
    }
    sum
}

/// `dst += a * src`, elementwise.
#[inline]
fn axpy<T: Real>(dst: &mut [T], a: T, src: &[T]) {
    debug_assert_eq!(dst.len(), src.len());
    for (d, &s) in dst.iter_mut().zip(src) {
        *d += a * s;
    }
}

/// Gather the padded input window for every output position into a dense
/// `out_len x (in_channels * kernel)` patch matrix. Row `j` is contiguous,
/// laid out `[ic0 k0..kK, ic1 k0..kK, ...]`, matching the weight layout.
fn fill_patches<T: Real>(
    x: &SignalTensor<T>,
    b: usize,
    spec: &ConvSpec<T>,
    out_len: usize,
    patches: &mut [T],
) {
    let in_len = x.length();
    let ick = spec.in_channels * spec.kernel;
    for j in 0..out_len {
        let row = &mut patches[j * ick..(j + 1) * ick];
        let start = j * spec.stride;
        for ic in 0..spec.in_channels {
            let x_row = x.row(b, ic);
            let base = ic * spec.kernel;
            for k in 0..spec.kernel {
                let padded = start + k;
                row[base + k] = if padded >= spec.padding && padded - spec.padding < in_len {
                    x_row[padded - spec.padding]
                } else {
                    T::zero()
                };
            }
        }
    }
}

/// Cross-correlation over the temporal axis with zero padding.
///
/// Internally each batch element's windows are gathered into a patch
/// matrix so every output value is one long contiguous dot product; this
/// keeps the deep, short-row stages compute-bound instead of
/// loop-overhead-bound.
pub fn conv1d_forward<T: Real>(
    x: &SignalTensor<T>,
    spec: &ConvSpec<T>,
) -> Result<SignalTensor<T>, LayerError> {
    let out_len = spec.validate_input(x)?;
    let ick = spec.in_channels * spec.kernel;
    let mut patches = vec![T::zero(); out_len * ick];
    let mut out = SignalTensor::zeros(x.batch(), spec.out_channels, out_len);

    for b in 0..x.batch() {
        fill_patches(x, b, spec, out_len, &mut patches);
        for oc in 0..spec.out_channels {
            let w_row = &spec.weights[oc * ick..(oc + 1) * ick];
            let bias = spec.bias[oc];
            let out_row = out.row_mut(b, oc);
            for (j, o) in out_row.iter_mut().enumerate() {
                *o = bias + dot(w_row, &patches[j * ick..(j + 1) * ick]);
            }
        }
    }
    debug_assert!(out.all_finite(), "conv1d_forward produced non-finite values");
    Ok(out)
}

#[derive(Clone, Debug)]
pub struct ConvGrads<T> {
    pub input: SignalTensor<T>,
    pub weights: Vec<T>,
    pub bias: Vec<T>,
}

/// Gradients of the convolution with respect to input, weights, and bias.
///
/// `grad_bias[oc]` is the sum of the upstream gradient over batch and
/// temporal positions for channel `oc`.
pub fn conv1d_backward<T: Real>(
    x: &SignalTensor<T>,
    spec: &ConvSpec<T>,
    upstream: &SignalTensor<T>,
) -> Result<ConvGrads<T>, LayerError> {
    let out_len = spec.validate_input(x)?;
    check_upstream(upstream, x.batch(), spec.out_channels, out_len)?;
    let in_len = x.length();
    let ick = spec.in_channels * spec.kernel;

    let mut grad_input = SignalTensor::zeros(x.batch(), x.channels(), in_len);
    let mut grad_weights = vec![T::zero(); spec.weights.len()];
    let mut grad_bias = vec![T::zero(); spec.out_channels];
    let mut patches = vec![T::zero(); out_len * ick];
    // q[j] accumulates the gradient w.r.t. patch row j; it is scattered
    // back onto the padded input positions afterwards.
    let mut q = vec![T::zero(); out_len * ick];

    for b in 0..x.batch() {
        fill_patches(x, b, spec, out_len, &mut patches);
        q.iter_mut().for_each(|v| *v = T::zero());

        for oc in 0..spec.out_channels {
            let up_row = upstream.row(b, oc);
            let w_row = &spec.weights[oc * ick..(oc + 1) * ick];
            let gw_row = &mut grad_weights[oc * ick..(oc + 1) * ick];
            let mut bias_sum = T::zero();
            for (j, &g) in up_row.iter().enumerate() {
                bias_sum += g;
                if g != T::zero() {
                    axpy(gw_row, g, &patches[j * ick..(j + 1) * ick]);
                    axpy(&mut q[j * ick..(j + 1) * ick], g, w_row);
                }
            }
            grad_bias[oc] += bias_sum;
        }

        // col2im: fold the patch gradients back onto the input, skipping
        // padding positions.
        for j in 0..out_len {
            let q_row = &q[j * ick..(j + 1) * ick];
            let start = j * spec.stride;
            for ic in 0..spec.in_channels {
                let gx_row = grad_input.row_mut(b, ic);
                let base = ic * spec.kernel;
                for k in 0..spec.kernel {
                    let padded = start + k;
                    if padded >= spec.padding && padded - spec.padding < in_len {
                        gx_row[padded - spec.padding] += q_row[base + k];
                    }
                }
            }
        }
    }

    Ok(ConvGrads {
        input: grad_input,
        weights: grad_weights,
        bias: grad_bias,
    })
}
