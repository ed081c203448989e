//! Dense row-major tensors.
//!
//! Activations in the model use the `[channel, time, feature]` layout. A
//! tensor that takes part in training carries its own gradient accumulator;
//! the tape adds into it on every backward pass until [`Tensor::zero_grad`].

use alloc::vec;
use alloc::vec::Vec;
use rand::Rng;

use crate::error::{shape_err, Error, Result};
use crate::scalar::Scalar;

/// Initial contents for [`Tensor::new`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Init {
    Zeros,
    Constant(f64),
    /// Uniform on `[low, high)`.
    Uniform(f64, f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<T> {
    shape: Vec<usize>,
    data: Vec<T>,
    requires_grad: bool,
    grad: Option<Vec<T>>,
}

impl<T: Scalar> Tensor<T> {
    /// Creates a tensor; `rng` is only consulted for [`Init::Uniform`].
    pub fn new<R: Rng + ?Sized>(shape: &[usize], init: Init, rng: &mut R) -> Result<Self> {
        let n = checked_len(shape)?;
        let data = match init {
            Init::Zeros => vec![T::zero(); n],
            Init::Constant(c) => vec![T::of(c); n],
            Init::Uniform(a, b) => (0..n).map(|_| T::of(a + (b - a) * rng.gen::<f64>())).collect(),
        };
        Ok(Self::raw(shape.to_vec(), data))
    }

    pub fn zeros(shape: &[usize]) -> Result<Self> {
        let n = checked_len(shape)?;
        Ok(Self::raw(shape.to_vec(), vec![T::zero(); n]))
    }

    pub fn constant(shape: &[usize], c: T) -> Result<Self> {
        let n = checked_len(shape)?;
        Ok(Self::raw(shape.to_vec(), vec![c; n]))
    }

    pub fn from_vec(shape: &[usize], data: Vec<T>) -> Result<Self> {
        let n = checked_len(shape)?;
        if n != data.len() {
            return Err(shape_err("from_vec", shape, &[data.len()]));
        }
        Ok(Self::raw(shape.to_vec(), data))
    }

    /// Builds a tensor without validating; callers guarantee the invariant.
    pub(crate) fn raw(shape: Vec<usize>, data: Vec<T>) -> Self {
        debug_assert_eq!(shape.iter().product::<usize>(), data.len());
        Self {
            shape,
            data,
            requires_grad: false,
            grad: None,
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    pub fn reshape(mut self, shape: &[usize]) -> Result<Self> {
        if shape.iter().product::<usize>() != self.data.len() {
            return Err(shape_err("reshape", shape, &self.shape));
        }
        self.shape = shape.to_vec();
        Ok(self)
    }

    pub fn requires_grad(&self) -> bool {
        self.requires_grad
    }

    pub fn set_requires_grad(&mut self, on: bool) {
        self.requires_grad = on;
        if !on {
            self.grad = None;
        }
    }

    pub fn grad(&self) -> Option<&[T]> {
        self.grad.as_deref()
    }

    pub fn grad_mut(&mut self) -> Option<&mut [T]> {
        self.grad.as_deref_mut()
    }

    /// Adds `g` into the gradient accumulator, creating it if absent.
    pub fn accumulate_grad(&mut self, g: &[T]) -> Result<()> {
        if g.len() != self.data.len() {
            return Err(shape_err("accumulate_grad", &self.shape, &[g.len()]));
        }
        match &mut self.grad {
            Some(acc) => acc.iter_mut().zip(g).for_each(|(a, &b)| *a = *a + b),
            None => self.grad = Some(g.to_vec()),
        }
        Ok(())
    }

    pub fn zero_grad(&mut self) {
        self.grad = None;
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Converts element precision; gradients are not carried over.
    pub fn cast<U: Scalar>(&self) -> Tensor<U> {
        let mut t = Tensor::raw(
            self.shape.clone(),
            self.data.iter().map(|v| U::of(v.as_f64())).collect(),
        );
        t.requires_grad = self.requires_grad;
        t
    }
}

fn checked_len(shape: &[usize]) -> Result<usize> {
    if shape.is_empty() || shape.contains(&0) {
        return Err(Error::ZeroExtent);
    }
    Ok(shape.iter().product())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;

    #[test]
    fn zeros_and_constant() {
        let t = Tensor::<f32>::zeros(&[2, 3]).unwrap();
        assert_eq!(t.shape(), &[2, 3]);
        assert!(t.data().iter().all(|&v| v == 0.0));
        let c = Tensor::<f32>::new(&[1], Init::Constant(5.0), &mut seeded(0)).unwrap();
        assert_eq!(c.data(), &[5.0]);
    }

    #[test]
    fn uniform_is_reproducible() {
        let a = Tensor::<f64>::new(&[4], Init::Uniform(-1.0, 1.0), &mut seeded(9)).unwrap();
        let b = Tensor::<f64>::new(&[4], Init::Uniform(-1.0, 1.0), &mut seeded(9)).unwrap();
        assert_eq!(a, b);
        assert!(a.data().iter().all(|v| (-1.0..1.0).contains(v)));
    }

    #[test]
    fn zero_extent_rejected() {
        assert_eq!(Tensor::<f32>::zeros(&[2, 0]).unwrap_err(), Error::ZeroExtent);
        assert!(Tensor::<f32>::from_vec(&[2, 2], vec![1.0; 3]).is_err());
    }

    #[test]
    fn grad_accumulates() {
        let mut t = Tensor::<f64>::zeros(&[2]).unwrap();
        t.accumulate_grad(&[1.0, 2.0]).unwrap();
        t.accumulate_grad(&[1.0, 2.0]).unwrap();
        assert_eq!(t.grad().unwrap(), &[2.0, 4.0]);
        t.zero_grad();
        assert!(t.grad().is_none());
    }
}
