//! Fully connected layer. Inputs and outputs are tensors of shape
//! `(batch, features, 1)`, which is exactly what global average pooling
//! hands to the head.

use serde::{Deserialize, Serialize};

use super::{check_upstream, LayerError};
use crate::tensor::{Real, SignalTensor};

/// Weights are `(out_features, in_features)` row-major.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DenseSpec<T> {
    pub in_features: usize,
    pub out_features: usize,
    pub weights: Vec<T>,
    pub bias: Vec<T>,
}

impl<T: Real> DenseSpec<T> {
    pub fn zeros(in_features: usize, out_features: usize) -> Self {
        Self {
            in_features,
            out_features,
            weights: vec![T::zero(); out_features * in_features],
            bias: vec![T::zero(); out_features],
        }
    }

    fn validate_input(&self, x: &SignalTensor<T>) -> Result<(), LayerError> {
        if x.channels() != self.in_features || x.length() != 1 {
            return Err(LayerError::FeatureMismatch {
                expected: self.in_features,
                actual: x.channels() * x.length(),
            });
        }
        Ok(())
    }
}

/// `y = W x + b` per batch row.
pub fn dense_forward<T: Real>(
    x: &SignalTensor<T>,
    spec: &DenseSpec<T>,
) -> Result<SignalTensor<T>, LayerError> {
    spec.validate_input(x)?;
    let batch = x.batch();
    let mut out = SignalTensor::zeros(batch, spec.out_features, 1);
    for b in 0..batch {
        let x_start = b * spec.in_features;
        let x_row = &x.values()[x_start..x_start + spec.in_features];
        for o in 0..spec.out_features {
            let w_row = &spec.weights[o * spec.in_features..(o + 1) * spec.in_features];
            let mut acc = spec.bias[o];
            for (w, xv) in w_row.iter().zip(x_row) {
                acc += *w * *xv;
            }
            *out.at_mut(b, o, 0) = acc;
        }
    }
    debug_assert!(out.all_finite(), "dense_forward produced non-finite values");
    Ok(out)
}

#[derive(Clone, Debug)]
pub struct DenseGrads<T> {
    pub input: SignalTensor<T>,
    pub weights: Vec<T>,
    pub bias: Vec<T>,
}

pub fn dense_backward<T: Real>(
    x: &SignalTensor<T>,
    spec: &DenseSpec<T>,
    upstream: &SignalTensor<T>,
) -> Result<DenseGrads<T>, LayerError> {
    spec.validate_input(x)?;
    check_upstream(upstream, x.batch(), spec.out_features, 1)?;
    let batch = x.batch();

    let mut grad_input = SignalTensor::zeros(batch, spec.in_features, 1);
    let mut grad_weights = vec![T::zero(); spec.weights.len()];
    let mut grad_bias = vec![T::zero(); spec.out_features];

    for b in 0..batch {
        let x_start = b * spec.in_features;
        let x_row = &x.values()[x_start..x_start + spec.in_features];
        for o in 0..spec.out_features {
            let g = upstream.at(b, o, 0);
            grad_bias[o] += g;
            let w_row = &spec.weights[o * spec.in_features..(o + 1) * spec.in_features];
            let gw_row = &mut grad_weights[o * spec.in_features..(o + 1) * spec.in_features];
            let gx = &mut grad_input.values_mut()[x_start..x_start + spec.in_features];
            for i in 0..spec.in_features {
                gw_row[i] += g * x_row[i];
                gx[i] += g * w_row[i];
            }
        }
    }

    Ok(DenseGrads {
        input: grad_input,
        weights: grad_weights,
        bias: grad_bias,
    })
}
