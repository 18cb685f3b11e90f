//! ReLU activation. The subgradient at exactly zero is defined to be zero
//! so gradient checks are deterministic.

use crate::tensor::{Real, SignalTensor};

pub fn relu<T: Real>(x: &SignalTensor<T>) -> SignalTensor<T> {
    x.map(|v| if v > T::zero() { v } else { T::zero() })
}

/// Passes the upstream gradient only where the forward input was strictly
/// positive.
pub fn relu_backward<T: Real>(x: &SignalTensor<T>, upstream: &SignalTensor<T>) -> SignalTensor<T> {
    debug_assert_eq!(x.shape(), upstream.shape());
    let mut out = SignalTensor::zeros(x.batch(), x.channels(), x.length());
    let values = out.values_mut();
    for (i, (&xv, &g)) in x.values().iter().zip(upstream.values()).enumerate() {
        values[i] = if xv > T::zero() { g } else { T::zero() };
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn clamps_negatives() {
        let x = SignalTensor::from_values(1, 1, 3, vec![-1.0, 0.0, 2.0]).unwrap();
        assert_eq!(relu(&x).values(), &[0.0, 0.0, 2.0]);
    }

    #[test]
    fn all_negative_becomes_zero() {
        let x = SignalTensor::from_values(1, 1, 4, vec![-5.0, -0.1, -3.0, -0.0]).unwrap();
        assert!(relu(&x).values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn backward_masks_non_positive() {
        let x = SignalTensor::from_values(1, 1, 4, vec![-1.0, 0.0, 0.5, 3.0]).unwrap();
        let up = SignalTensor::from_values(1, 1, 4, vec![10.0, 10.0, 10.0, 10.0]).unwrap();
        assert_eq!(relu_backward(&x, &up).values(), &[0.0, 0.0, 10.0, 10.0]);
    }
}
