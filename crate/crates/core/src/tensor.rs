//! Dense row-major tensors.
//!
//! A [`Tensor`] is an immutable value carrier; gradients live on the
//! [`crate::autodiff::Tape`], keyed by the variable that produced them.

use crate::error::{Error, Result};
use crate::num::{real, Real};

/// Dense n-dimensional array, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<S: Real = f64> {
    shape: Vec<usize>,
    data: Vec<S>,
}

impl<S: Real> Tensor<S> {
    /// Builds a tensor from a shape and row-major data.
    pub fn new(shape: Vec<usize>, data: Vec<S>) -> Result<Self> {
        let numel: usize = shape.iter().product();
        if shape.iter().any(|&d| d == 0) {
            return Err(Error::Contract(format!(
                "tensor extents must be positive, got {shape:?}"
            )));
        }
        if numel != data.len() {
            return Err(Error::dim(
                &shape,
                &[data.len()],
                "product of extents must equal number of values",
            ));
        }
        Ok(Tensor { shape, data })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        let numel = shape.iter().product();
        Tensor {
            shape: shape.to_vec(),
            data: vec![S::zero(); numel],
        }
    }

    pub fn full(shape: &[usize], value: S) -> Self {
        let numel = shape.iter().product();
        Tensor {
            shape: shape.to_vec(),
            data: vec![value; numel],
        }
    }

    /// Scalar tensor of shape `[1]`.
    pub fn scalar(value: S) -> Self {
        Tensor {
            shape: vec![1],
            data: vec![value],
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    pub fn data(&self) -> &[S] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [S] {
        &mut self.data
    }

    /// The single value of a scalar tensor.
    pub fn scalar_value(&self) -> Result<S> {
        if self.numel() == 1 {
            Ok(self.data[0])
        } else {
            Err(Error::Contract(format!(
                "expected a scalar tensor, got shape {:?}",
                self.shape
            )))
        }
    }

    pub fn is_scalar(&self) -> bool {
        self.numel() == 1
    }

    pub fn map(&self, f: impl Fn(S) -> S) -> Self {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&x| f(x)).collect(),
        }
    }

    /// Elementwise sum of two same-shape tensors.
    pub fn add(&self, other: &Tensor<S>) -> Result<Self> {
        self.check_same_shape(other, "elementwise add")?;
        Ok(Tensor {
            shape: self.shape.clone(),
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| a + b)
                .collect(),
        })
    }

    /// Accumulates `other` into `self` in place (same shapes required).
    pub fn add_assign(&mut self, other: &Tensor<S>) -> Result<()> {
        self.check_same_shape(other, "elementwise add-assign")?;
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
        Ok(())
    }

    pub fn scale(&self, factor: S) -> Self {
        self.map(|x| x * factor)
    }

    /// Flat inner product.
    pub fn dot(&self, other: &Tensor<S>) -> Result<S> {
        self.check_same_shape(other, "inner product")?;
        Ok(self
            .data
            .iter()
            .zip(&other.data)
            .map(|(&a, &b)| a * b)
            .sum())
    }

    pub fn sum(&self) -> S {
        self.data.iter().copied().sum()
    }

    pub fn max_abs(&self) -> S {
        self.data
            .iter()
            .fold(S::zero(), |acc, &x| acc.max(x.abs()))
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    pub(crate) fn check_same_shape(&self, other: &Tensor<S>, context: &str) -> Result<()> {
        if self.shape != other.shape {
            return Err(Error::dim(&self.shape, &other.shape, context));
        }
        Ok(())
    }

    /// Lossless scalar-type conversion (used to instantiate f32 models from
    /// f64 fixtures and vice versa; conversion through f64).
    pub fn cast<T: Real>(&self) -> Tensor<T> {
        Tensor {
            shape: self.shape.clone(),
            data: self
                .data
                .iter()
                .map(|x| real::<T>(x.to_f64().unwrap()))
                .collect(),
        }
    }
}

impl<S: Real> Tensor<S> {
    /// Value at `(c, i, j)` of a 3-D `[C,H,W]` tensor. Debug-checked.
    #[inline]
    pub fn at3(&self, c: usize, i: usize, j: usize) -> S {
        debug_assert_eq!(self.shape.len(), 3);
        let (h, w) = (self.shape[1], self.shape[2]);
        self.data[(c * h + i) * w + j]
    }
}
