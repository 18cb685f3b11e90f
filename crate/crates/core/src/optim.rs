//! Adam parameter updates with bias correction.

use serde::{Deserialize, Serialize};

use crate::tensor::Real;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

impl AdamConfig {
    pub fn with_learning_rate(learning_rate: f64) -> Self {
        Self {
            learning_rate,
            ..Self::default()
        }
    }
}

/// First/second moment accumulators for one set of parameter tensors.
/// Slot `i` shape-matches the `i`-th trainable tensor it was created for.
#[derive(Clone, Debug)]
pub struct AdamState<T> {
    pub config: AdamConfig,
    step: u64,
    m: Vec<Vec<T>>,
    v: Vec<Vec<T>>,
}

impl<T: Real> AdamState<T> {
    pub fn new(config: AdamConfig, slot_sizes: &[usize]) -> Self {
        Self {
            config,
            step: 0,
            m: slot_sizes.iter().map(|&n| vec![T::zero(); n]).collect(),
            v: slot_sizes.iter().map(|&n| vec![T::zero(); n]).collect(),
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn slot_count(&self) -> usize {
        self.m.len()
    }

    /// Advance the step counter. Call once per optimization step, before
    /// updating slots.
    pub fn begin_step(&mut self) {
        self.step += 1;
    }

    /// Apply the Adam update to one parameter tensor in place.
    ///
    /// Panics if the slot index or shapes disagree with construction;
    /// callers drive this from a fixed traversal, so a mismatch is a bug.
    pub fn update_slot(&mut self, slot: usize, params: &mut [T], grads: &[T]) {
        assert!(self.step > 0, "begin_step must run before update_slot");
        assert_eq!(params.len(), grads.len(), "param/grad length mismatch");
        let m = &mut self.m[slot];
        let v = &mut self.v[slot];
        assert_eq!(params.len(), m.len(), "slot {slot} shape changed");

        let b1 = T::from_f64(self.config.beta1);
        let b2 = T::from_f64(self.config.beta2);
        let lr = T::from_f64(self.config.learning_rate);
        let eps = T::from_f64(self.config.eps);
        let one = T::one();
        // Bias corrections for the current step.
        let bc1 = one - T::from_f64(self.config.beta1.powi(self.step as i32));
        let bc2 = one - T::from_f64(self.config.beta2.powi(self.step as i32));

        for i in 0..params.len() {
            let g = grads[i];
            m[i] = b1 * m[i] + (one - b1) * g;
            v[i] = b2 * v[i] + (one - b2) * g * g;
            let m_hat = m[i] / bc1;
            let v_hat = v[i] / bc2;
            params[i] -= lr * m_hat / (v_hat.sqrt() + eps);
        }
    }
}
