//! 1D batch normalization over `(batch, length)` per channel.
//!
//! Train mode normalizes with the population (biased) variance of the
//! current batch and updates running statistics with the unbiased variance
//! estimate; eval mode normalizes with the stored running statistics.

use serde::{Deserialize, Serialize};

use super::{check_upstream, LayerError, Mode};
use crate::tensor::{Real, SignalTensor};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BatchNormSpec<T> {
    pub channels: usize,
    pub gamma: Vec<T>,
    pub beta: Vec<T>,
    pub running_mean: Vec<T>,
    pub running_var: Vec<T>,
    pub eps: T,
    pub momentum: T,
}

impl<T: Real> BatchNormSpec<T> {
    /// gamma = 1, beta = 0, running mean 0 / variance 1, eps 1e-5,
    /// momentum 0.1.
    pub fn identity(channels: usize) -> Self {
        Self {
            channels,
            gamma: vec![T::one(); channels],
            beta: vec![T::zero(); channels],
            running_mean: vec![T::zero(); channels],
            running_var: vec![T::one(); channels],
            eps: T::from_f64(1e-5),
            momentum: T::from_f64(0.1),
        }
    }

    fn validate_input(&self, x: &SignalTensor<T>) -> Result<(), LayerError> {
        if x.channels() != self.channels {
            return Err(LayerError::ChannelMismatch {
                expected: self.channels,
                actual: x.channels(),
            });
        }
        Ok(())
    }
}

/// Values the backward pass needs from a train-mode forward pass.
#[derive(Clone, Debug)]
pub struct BatchNormCache<T> {
    /// Normalized input (before gamma/beta), same layout as the input.
    x_hat: Vec<T>,
    /// Per-channel 1 / sqrt(var + eps).
    inv_std: Vec<T>,
    batch: usize,
    channels: usize,
    length: usize,
}

/// Train-mode forward: normalize per channel over `(batch, length)` using
/// population variance, apply gamma/beta, and update running statistics.
pub fn batchnorm1d_train<T: Real>(
    x: &SignalTensor<T>,
    spec: &mut BatchNormSpec<T>,
) -> Result<(SignalTensor<T>, BatchNormCache<T>), LayerError> {
    spec.validate_input(x)?;
    let (batch, channels, length) = x.shape();
    let n = batch * length;
    if n < 2 {
        return Err(LayerError::DegenerateVariance { elements: n });
    }
    let n_t = T::from_f64(n as f64);

    let mut out = SignalTensor::zeros(batch, channels, length);
    let mut x_hat = vec![T::zero(); x.len()];
    let mut inv_std = vec![T::zero(); channels];

    for (c, inv_std_c) in inv_std.iter_mut().enumerate() {
        let mut sum = T::zero();
        for b in 0..batch {
            for &v in x.row(b, c) {
                sum += v;
            }
        }
        let mean = sum / n_t;

        let mut var_sum = T::zero();
        for b in 0..batch {
            for &v in x.row(b, c) {
                let d = v - mean;
                var_sum += d * d;
            }
        }
        let var = var_sum / n_t;
        let istd = (var + spec.eps).sqrt().recip();
        *inv_std_c = istd;

        let gamma = spec.gamma[c];
        let beta = spec.beta[c];
        for b in 0..batch {
            let base = (b * channels + c) * length;
            let x_row = x.row(b, c);
            let out_row = out.row_mut(b, c);
            for i in 0..length {
                let xh = (x_row[i] - mean) * istd;
                x_hat[base + i] = xh;
                out_row[i] = gamma * xh + beta;
            }
        }

        // Running statistics use the unbiased variance estimate.
        let unbiased = var * n_t / T::from_f64((n - 1) as f64);
        let m = spec.momentum;
        spec.running_mean[c] = (T::one() - m) * spec.running_mean[c] + m * mean;
        spec.running_var[c] = (T::one() - m) * spec.running_var[c] + m * unbiased;
    }

    debug_assert!(out.all_finite(), "batchnorm1d_train produced non-finite values");
    Ok((
        out,
        BatchNormCache {
            x_hat,
            inv_std,
            batch,
            channels,
            length,
        },
    ))
}

/// Eval-mode forward: normalize with running statistics only.
pub fn batchnorm1d_eval<T: Real>(
    x: &SignalTensor<T>,
    spec: &BatchNormSpec<T>,
) -> Result<SignalTensor<T>, LayerError> {
    spec.validate_input(x)?;
    let (batch, channels, length) = x.shape();
    let mut out = SignalTensor::zeros(batch, channels, length);
    for c in 0..channels {
        let istd = (spec.running_var[c] + spec.eps).sqrt().recip();
        let scale = spec.gamma[c] * istd;
        let shift = spec.beta[c] - spec.running_mean[c] * scale;
        for b in 0..batch {
            let x_row = x.row(b, c);
            let out_row = out.row_mut(b, c);
            for i in 0..length {
                out_row[i] = scale * x_row[i] + shift;
            }
        }
    }
    debug_assert!(out.all_finite(), "batchnorm1d_eval produced non-finite values");
    Ok(out)
}

/// Mode-dispatching forward. Train mode returns the cache the backward pass
/// needs; eval mode returns `None`.
pub fn batchnorm1d<T: Real>(
    x: &SignalTensor<T>,
    spec: &mut BatchNormSpec<T>,
    mode: Mode,
) -> Result<(SignalTensor<T>, Option<BatchNormCache<T>>), LayerError> {
    match mode {
        Mode::Train => {
            let (out, cache) = batchnorm1d_train(x, spec)?;
            Ok((out, Some(cache)))
        }
        Mode::Eval => Ok((batchnorm1d_eval(x, spec)?, None)),
    }
}

#[derive(Clone, Debug)]
pub struct BatchNormGrads<T> {
    pub input: SignalTensor<T>,
    pub gamma: Vec<T>,
    pub beta: Vec<T>,
}

/// Backward pass for train-mode batch norm.
///
/// With `dbeta = sum(dy)` and `dgamma = sum(dy * x_hat)` per channel:
/// `dx = gamma * inv_std / N * (N*dy - dbeta - x_hat * dgamma)`.
pub fn batchnorm1d_backward<T: Real>(
    cache: &BatchNormCache<T>,
    spec: &BatchNormSpec<T>,
    upstream: &SignalTensor<T>,
) -> Result<BatchNormGrads<T>, LayerError> {
    check_upstream(upstream, cache.batch, cache.channels, cache.length)?;
    let (batch, channels, length) = (cache.batch, cache.channels, cache.length);
    let n = batch * length;
    let n_t = T::from_f64(n as f64);

    let mut grad_input = SignalTensor::zeros(batch, channels, length);
    let mut grad_gamma = vec![T::zero(); channels];
    let mut grad_beta = vec![T::zero(); channels];

    for c in 0..channels {
        let mut sum_dy = T::zero();
        let mut sum_dy_xhat = T::zero();
        for b in 0..batch {
            let base = (b * channels + c) * length;
            let up_row = upstream.row(b, c);
            for (&dy, &xh) in up_row.iter().zip(&cache.x_hat[base..base + length]) {
                sum_dy += dy;
                sum_dy_xhat += dy * xh;
            }
        }
        grad_beta[c] = sum_dy;
        grad_gamma[c] = sum_dy_xhat;

        let coeff = spec.gamma[c] * cache.inv_std[c] / n_t;
        for b in 0..batch {
            let base = (b * channels + c) * length;
            let up_row = upstream.row(b, c);
            let gx_row = grad_input.row_mut(b, c);
            for ((gx, &dy), &xh) in gx_row
                .iter_mut()
                .zip(up_row)
                .zip(&cache.x_hat[base..base + length])
            {
                *gx = coeff * (n_t * dy - sum_dy - xh * sum_dy_xhat);
            }
        }
    }

    Ok(BatchNormGrads {
        input: grad_input,
        gamma: grad_gamma,
        beta: grad_beta,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zscores_an_arithmetic_sequence() {
        // Channel values [1,2,3] with gamma=1, beta=0 and tiny eps
        // normalize to roughly [-1.2247, 0, 1.2247] (population std
        // sqrt(2/3)).
        let mut spec = BatchNormSpec::<f64>::identity(1);
        spec.eps = 1e-12;
        let x = SignalTensor::from_values(1, 1, 3, vec![1.0, 2.0, 3.0]).unwrap();
        let (y, _) = batchnorm1d_train(&x, &mut spec).unwrap();
        let expected = 1.224744871391589;
        assert!((y.values()[0] + expected).abs() < 1e-6);
        assert!(y.values()[1].abs() < 1e-9);
        assert!((y.values()[2] - expected).abs() < 1e-6);
    }

    #[test]
    fn zero_gamma_outputs_beta() {
        let mut spec = BatchNormSpec::<f64>::identity(2);
        spec.gamma = vec![0.0, 0.0];
        spec.beta = vec![1.5, -0.5];
        let x = SignalTensor::from_values(2, 2, 2, (0..8).map(|v| v as f64).collect()).unwrap();
        let (y, _) = batchnorm1d_train(&x, &mut spec).unwrap();
        for b in 0..2 {
            assert_eq!(y.row(b, 0), &[1.5, 1.5]);
            assert_eq!(y.row(b, 1), &[-0.5, -0.5]);
        }
    }

    #[test]
    fn train_mode_output_statistics() {
        // Per channel the train-mode output has mean beta and population
        // variance close to gamma^2.
        let mut spec = BatchNormSpec::<f64>::identity(1);
        spec.gamma = vec![2.0];
        spec.beta = vec![0.25];
        spec.eps = 1e-12;
        let values: Vec<f64> = (0..64).map(|i| (i as f64 * 0.7).sin() * 5.0 + 1.0).collect();
        let x = SignalTensor::from_values(4, 1, 16, values).unwrap();
        let (y, _) = batchnorm1d_train(&x, &mut spec).unwrap();
        let n = y.len() as f64;
        let mean: f64 = y.values().iter().sum::<f64>() / n;
        let var: f64 = y.values().iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        assert!((mean - 0.25).abs() < 1e-6);
        assert!((var - 4.0).abs() < 1e-4);
    }

    #[test]
    fn single_element_is_degenerate() {
        let mut spec = BatchNormSpec::<f64>::identity(1);
        let x = SignalTensor::from_values(1, 1, 1, vec![5.0]).unwrap();
        assert_eq!(
            batchnorm1d_train(&x, &mut spec).unwrap_err(),
            LayerError::DegenerateVariance { elements: 1 }
        );
    }

    #[test]
    fn eval_uses_running_stats() {
        let mut spec = BatchNormSpec::<f64>::identity(1);
        spec.running_mean = vec![10.0];
        spec.running_var = vec![4.0];
        spec.eps = 0.0;
        let x = SignalTensor::from_values(1, 1, 2, vec![10.0, 14.0]).unwrap();
        let y = batchnorm1d_eval(&x, &spec).unwrap();
        assert!((y.values()[0] - 0.0).abs() < 1e-12);
        assert!((y.values()[1] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn running_stats_update_with_momentum() {
        let mut spec = BatchNormSpec::<f64>::identity(1);
        spec.momentum = 0.5;
        // Batch of 4 values [0, 2, 4, 6]: mean 3, population var 5,
        // unbiased var 20/3.
        let x = SignalTensor::from_values(2, 1, 2, vec![0.0, 2.0, 4.0, 6.0]).unwrap();
        batchnorm1d_train(&x, &mut spec).unwrap();
        assert!((spec.running_mean[0] - 1.5).abs() < 1e-12);
        assert!((spec.running_var[0] - (0.5 + 0.5 * 20.0 / 3.0)).abs() < 1e-12);
    }
}
