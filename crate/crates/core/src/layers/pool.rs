//! Max pooling and global average pooling over the temporal axis.

use serde::{Deserialize, Serialize};

use super::{check_upstream, conv1d_output_length, LayerError};
use crate::tensor::{Real, SignalTensor};

/// Max-pool window configuration. Defaults to kernel 3, stride 2,
/// padding 1 (the network's only pooling layer).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PoolSpec {
    pub kernel: usize,
    pub stride: usize,
    pub padding: usize,
}

impl Default for PoolSpec {
    fn default() -> Self {
        Self {
            kernel: 3,
            stride: 2,
            padding: 1,
        }
    }
}

#[derive(Clone, Debug)]
pub struct MaxPoolOutput<T> {
    pub output: SignalTensor<T>,
    /// For each output element, the temporal input index that won the
    /// window (padding positions never win; ties go to the lowest index).
    pub argmax: Vec<usize>,
}

pub fn maxpool1d<T: Real>(
    x: &SignalTensor<T>,
    spec: PoolSpec,
) -> Result<MaxPoolOutput<T>, LayerError> {
    if x.length() == 0 {
        return Err(LayerError::EmptyInput);
    }
    let out_len = conv1d_output_length(x.length(), spec.kernel, spec.stride, spec.padding).ok_or(
        LayerError::EmptyOutput {
            length: x.length(),
            kernel: spec.kernel,
            stride: spec.stride,
            padding: spec.padding,
        },
    )?;

    let (batch, channels, in_len) = x.shape();
    let mut output = SignalTensor::zeros(batch, channels, out_len);
    let mut argmax = vec![0usize; batch * channels * out_len];

    for b in 0..batch {
        for c in 0..channels {
            let x_row = x.row(b, c);
            let base = (b * channels + c) * out_len;
            for j in 0..out_len {
                // Window start in padded coordinates; padding positions are
                // skipped, which is equivalent to a -infinity sentinel.
                let start = j * spec.stride;
                let mut best: Option<(usize, T)> = None;
                for k in 0..spec.kernel {
                    let padded = start + k;
                    if padded < spec.padding {
                        continue;
                    }
                    let i = padded - spec.padding;
                    if i >= in_len {
                        break;
                    }
                    let v = x_row[i];
                    match best {
                        Some((_, bv)) if v <= bv => {}
                        _ => best = Some((i, v)),
                    }
                }
                // out_len >= 1 guarantees every window overlaps the input.
                let (i, v) = best.expect("pool window must overlap input");
                *output.at_mut(b, c, j) = v;
                argmax[base + j] = i;
            }
        }
    }

    Ok(MaxPoolOutput { output, argmax })
}

/// Routes the upstream gradient to the positions that won each window.
/// Gradient mass is conserved: `sum(grad_input) == sum(upstream)`.
pub fn maxpool1d_backward<T: Real>(
    input_shape: (usize, usize, usize),
    argmax: &[usize],
    upstream: &SignalTensor<T>,
) -> Result<SignalTensor<T>, LayerError> {
    let (batch, channels, in_len) = input_shape;
    let (ub, uc, ul) = upstream.shape();
    if ub != batch || uc != channels || argmax.len() != upstream.len() {
        let expected_len = argmax.len() / (batch * channels).max(1);
        return Err(LayerError::UpstreamShapeMismatch {
            batch,
            channels,
            length: expected_len,
            actual_batch: ub,
            actual_channels: uc,
            actual_length: ul,
        });
    }
    let mut grad = SignalTensor::zeros(batch, channels, in_len);
    for b in 0..batch {
        for c in 0..channels {
            let base = (b * channels + c) * ul;
            let up_row = upstream.row(b, c);
            let g_row = grad.row_mut(b, c);
            for j in 0..ul {
                g_row[argmax[base + j]] += up_row[j];
            }
        }
    }
    Ok(grad)
}

/// Mean over the temporal dimension, per `(batch, channel)`.
pub fn global_avg_pool<T: Real>(x: &SignalTensor<T>) -> Result<SignalTensor<T>, LayerError> {
    if x.length() == 0 {
        return Err(LayerError::EmptyInput);
    }
    let (batch, channels, length) = x.shape();
    let inv = T::from_f64(1.0 / length as f64);
    let mut out = SignalTensor::zeros(batch, channels, 1);
    for b in 0..batch {
        for c in 0..channels {
            let mut sum = T::zero();
            for &v in x.row(b, c) {
                sum += v;
            }
            *out.at_mut(b, c, 0) = sum * inv;
        }
    }
    Ok(out)
}

/// Distributes `upstream / length` uniformly over the temporal positions.
pub fn global_avg_pool_backward<T: Real>(
    input_shape: (usize, usize, usize),
    upstream: &SignalTensor<T>,
) -> Result<SignalTensor<T>, LayerError> {
    let (batch, channels, length) = input_shape;
    check_upstream(upstream, batch, channels, 1)?;
    let inv = T::from_f64(1.0 / length as f64);
    let mut grad = SignalTensor::zeros(batch, channels, length);
    for b in 0..batch {
        for c in 0..channels {
            let g = upstream.at(b, c, 0) * inv;
            grad.row_mut(b, c).fill(g);
        }
    }
    Ok(grad)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn output_length_89_to_45() {
        let x = SignalTensor::<f32>::zeros(1, 1, 89);
        let out = maxpool1d(&x, PoolSpec::default()).unwrap();
        assert_eq!(out.output.length(), 45);
    }

    #[test]
    fn strictly_increasing_selects_rightmost_in_bounds() {
        let x = SignalTensor::from_values(1, 1, 5, vec![1.0, 2.0, 3.0, 4.0, 5.0]).unwrap();
        let out = maxpool1d(&x, PoolSpec::default()).unwrap();
        // Windows (padded): [-,0,1], [1,2,3], [3,4,-] -> indices 1, 3, 4.
        assert_eq!(out.output.values(), &[2.0, 4.0, 5.0]);
        assert_eq!(out.argmax, vec![1, 3, 4]);
    }

    #[test]
    fn ties_break_to_lowest_index() {
        let x = SignalTensor::from_values(1, 1, 5, vec![7.0, 7.0, 7.0, 7.0, 7.0]).unwrap();
        let out = maxpool1d(&x, PoolSpec::default()).unwrap();
        assert_eq!(out.argmax, vec![0, 1, 3]);
    }

    #[test]
    fn padding_is_never_selected() {
        let x = SignalTensor::from_values(1, 1, 3, vec![-5.0, -6.0, -7.0]).unwrap();
        let out = maxpool1d(&x, PoolSpec::default()).unwrap();
        // Even though the values are negative, padded zeros must not win.
        assert_eq!(out.output.values(), &[-5.0, -6.0]);
    }

    #[test]
    fn empty_input_is_an_error() {
        let x = SignalTensor::<f32>::zeros(1, 1, 0);
        assert_eq!(
            maxpool1d(&x, PoolSpec::default()).unwrap_err(),
            LayerError::EmptyInput
        );
    }

    #[test]
    fn backward_routes_to_argmax_and_conserves_mass() {
        let x = SignalTensor::from_values(1, 1, 5, vec![1.0, 5.0, 2.0, 5.0, 3.0]).unwrap();
        let out = maxpool1d(&x, PoolSpec::default()).unwrap();
        let up = SignalTensor::from_values(1, 1, 3, vec![1.0, 10.0, 100.0]).unwrap();
        let grad = maxpool1d_backward(x.shape(), &out.argmax, &up).unwrap();
        let up_sum: f64 = up.values().iter().sum();
        let g_sum: f64 = grad.values().iter().sum();
        assert_eq!(up_sum, g_sum);
        // Window argmaxes: [_,1], [1..3]->1, [3,4]->3; index 1 receives 1+10.
        assert_eq!(grad.values(), &[0.0, 11.0, 0.0, 100.0, 0.0]);
    }

    #[test]
    fn gap_means_and_distributes() {
        let x = SignalTensor::from_values(1, 1, 3, vec![2.0, 4.0, 6.0]).unwrap();
        let y = global_avg_pool(&x).unwrap();
        assert_eq!(y.values(), &[4.0]);
        let up = SignalTensor::from_values(1, 1, 1, vec![9.0]).unwrap();
        let g = global_avg_pool_backward(x.shape(), &up).unwrap();
        assert_eq!(g.values(), &[3.0, 3.0, 3.0]);
    }

    #[test]
    fn gap_constant_channel_is_identity() {
        let x = SignalTensor::filled(2, 3, 7, 1.25f32);
        let y = global_avg_pool(&x).unwrap();
        assert!(y.values().iter().all(|&v| v == 1.25));
    }
}
