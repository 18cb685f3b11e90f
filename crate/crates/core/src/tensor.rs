//! Dense `(batch, channels, length)` tensor used by every layer.
//!
//! Values are stored row-major: the element `(b, c, i)` lives at
//! `(b * channels + c) * length + i`. A tensor may carry an optional
//! gradient buffer of identical shape.

use std::fmt;

use thiserror::Error;

/// Scalar element type for network math.
///
/// Training and inference run in `f32`; gradient checking instantiates the
/// same code in `f64`.
pub trait Real:
    num_traits::Float
    + num_traits::NumAssign
    + std::iter::Sum
    + Default
    + fmt::Debug
    + fmt::Display
    + Send
    + Sync
    + 'static
{
    fn from_f64(v: f64) -> Self;
    fn to_f64(self) -> f64;
}

impl Real for f32 {
    fn from_f64(v: f64) -> Self {
        v as f32
    }
    fn to_f64(self) -> f64 {
        self as f64
    }
}

impl Real for f64 {
    fn from_f64(v: f64) -> Self {
        v
    }
    fn to_f64(self) -> f64 {
        self
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum TensorError {
    #[error("value buffer holds {actual} elements, shape ({batch}, {channels}, {length}) needs {expected}")]
    LengthMismatch {
        batch: usize,
        channels: usize,
        length: usize,
        expected: usize,
        actual: usize,
    },
    #[error("gradient buffer holds {actual} elements, expected {expected}")]
    GradLengthMismatch { expected: usize, actual: usize },
    #[error("non-finite value at flat index {index}")]
    NonFinite { index: usize },
}

/// Dense numeric array with shape `(batch, channels, length)` and an
/// optional gradient buffer of the same shape.
#[derive(Clone, Debug, PartialEq)]
pub struct SignalTensor<T> {
    batch: usize,
    channels: usize,
    length: usize,
    values: Vec<T>,
    grad: Option<Vec<T>>,
}

impl<T: Real> SignalTensor<T> {
    pub fn zeros(batch: usize, channels: usize, length: usize) -> Self {
        Self {
            batch,
            channels,
            length,
            values: vec![T::zero(); batch * channels * length],
            grad: None,
        }
    }

    pub fn filled(batch: usize, channels: usize, length: usize, value: T) -> Self {
        Self {
            batch,
            channels,
            length,
            values: vec![value; batch * channels * length],
            grad: None,
        }
    }

    pub fn from_values(
        batch: usize,
        channels: usize,
        length: usize,
        values: Vec<T>,
    ) -> Result<Self, TensorError> {
        let expected = batch * channels * length;
        if values.len() != expected {
            return Err(TensorError::LengthMismatch {
                batch,
                channels,
                length,
                expected,
                actual: values.len(),
            });
        }
        Ok(Self {
            batch,
            channels,
            length,
            values,
            grad: None,
        })
    }

    pub fn batch(&self) -> usize {
        self.batch
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn length(&self) -> usize {
        self.length
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        (self.batch, self.channels, self.length)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [T] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<T> {
        self.values
    }

    #[inline]
    pub fn at(&self, b: usize, c: usize, i: usize) -> T {
        self.values[(b * self.channels + c) * self.length + i]
    }

    #[inline]
    pub fn at_mut(&mut self, b: usize, c: usize, i: usize) -> &mut T {
        &mut self.values[(b * self.channels + c) * self.length + i]
    }

    /// Contiguous temporal row for one `(batch, channel)` pair.
    #[inline]
    pub fn row(&self, b: usize, c: usize) -> &[T] {
        let start = (b * self.channels + c) * self.length;
        &self.values[start..start + self.length]
    }

    #[inline]
    pub fn row_mut(&mut self, b: usize, c: usize) -> &mut [T] {
        let start = (b * self.channels + c) * self.length;
        &mut self.values[start..start + self.length]
    }

    pub fn grad(&self) -> Option<&[T]> {
        self.grad.as_deref()
    }

    pub fn set_grad(&mut self, grad: Vec<T>) -> Result<(), TensorError> {
        if grad.len() != self.values.len() {
            return Err(TensorError::GradLengthMismatch {
                expected: self.values.len(),
                actual: grad.len(),
            });
        }
        self.grad = Some(grad);
        Ok(())
    }

    pub fn clear_grad(&mut self) {
        self.grad = None;
    }

    pub fn all_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    pub fn check_finite(&self) -> Result<(), TensorError> {
        match self.values.iter().position(|v| !v.is_finite()) {
            Some(index) => Err(TensorError::NonFinite { index }),
            None => Ok(()),
        }
    }

    /// Elementwise map into a new tensor of the same shape.
    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Self {
            batch: self.batch,
            channels: self.channels,
            length: self.length,
            values: self.values.iter().map(|&v| f(v)).collect(),
            grad: None,
        }
    }

    /// Convert element type (used to move between f32 and f64 builds).
    pub fn cast<U: Real>(&self) -> SignalTensor<U> {
        SignalTensor {
            batch: self.batch,
            channels: self.channels,
            length: self.length,
            values: self
                .values
                .iter()
                .map(|&v| U::from_f64(v.to_f64()))
                .collect(),
            grad: None,
        }
    }
}
