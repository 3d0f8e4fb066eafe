//! Dense row-major `f64` tensors with 1 to 4 axes.

use std::fmt;

use crate::error::{Error, Result};

/// Maximum number of axes a [`Tensor`] may carry.
pub const MAX_RANK: usize = 4;

/// A validated list of extents, each at least 1.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Shape(Vec<usize>);

impl Shape {
    pub fn new(extents: &[usize]) -> Result<Self> {
        if extents.is_empty() || extents.len() > MAX_RANK {
            return Err(Error::InvalidShape(format!(
                "rank must be between 1 and {MAX_RANK}, got {}",
                extents.len()
            )));
        }
        if let Some(pos) = extents.iter().position(|&e| e == 0) {
            return Err(Error::InvalidShape(format!(
                "extent {pos} of {extents:?} is zero"
            )));
        }
        Ok(Shape(extents.to_vec()))
    }

    pub fn extents(&self) -> &[usize] {
        &self.0
    }

    pub fn rank(&self) -> usize {
        self.0.len()
    }

    pub fn numel(&self) -> usize {
        self.0.iter().product()
    }

    /// Row-major strides, last axis fastest.
    pub fn strides(&self) -> Vec<usize> {
        let mut strides = vec![1; self.0.len()];
        for axis in (0..self.0.len().saturating_sub(1)).rev() {
            strides[axis] = strides[axis + 1] * self.0[axis + 1];
        }
        strides
    }

    fn offset(&self, index: &[usize]) -> Result<usize> {
        if index.len() != self.0.len() || index.iter().zip(&self.0).any(|(&i, &e)| i >= e) {
            return Err(Error::IndexOutOfBounds {
                index: index.to_vec(),
                shape: self.0.clone(),
            });
        }
        Ok(index
            .iter()
            .zip(self.strides())
            .map(|(&i, s)| i * s)
            .sum())
    }
}

impl fmt::Display for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (n, e) in self.0.iter().enumerate() {
            if n > 0 {
                write!(f, ",")?;
            }
            write!(f, "{e}")?;
        }
        write!(f, ")")
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    shape: Shape,
    data: Vec<f64>,
}

impl Tensor {
    pub fn new(extents: &[usize], fill: f64) -> Result<Self> {
        let shape = Shape::new(extents)?;
        let data = vec![fill; shape.numel()];
        Ok(Tensor { shape, data })
    }

    pub fn zeros(extents: &[usize]) -> Result<Self> {
        Self::new(extents, 0.0)
    }

    pub fn from_vec(extents: &[usize], data: Vec<f64>) -> Result<Self> {
        let shape = Shape::new(extents)?;
        if shape.numel() != data.len() {
            return Err(Error::InvalidShape(format!(
                "shape {shape} needs {} values, got {}",
                shape.numel(),
                data.len()
            )));
        }
        Ok(Tensor { shape, data })
    }

    /// 1D tensor from a slice of values.
    pub fn vector(values: &[f64]) -> Result<Self> {
        Self::from_vec(&[values.len()], values.to_vec())
    }

    pub fn shape(&self) -> &Shape {
        &self.shape
    }

    pub fn dims(&self) -> &[usize] {
        self.shape.extents()
    }

    pub fn rank(&self) -> usize {
        self.shape.rank()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    /// Always false: every extent is at least 1.
    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn get(&self, index: &[usize]) -> Result<f64> {
        Ok(self.data[self.shape.offset(index)?])
    }

    /// Returns a copy with the element at `index` replaced by `value`.
    pub fn set(&self, index: &[usize], value: f64) -> Result<Tensor> {
        let mut out = self.clone();
        out.set_in_place(index, value)?;
        Ok(out)
    }

    pub(crate) fn set_in_place(&mut self, index: &[usize], value: f64) -> Result<()> {
        let offset = self.shape.offset(index)?;
        self.data[offset] = value;
        Ok(())
    }

    pub(crate) fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    /// Same data under a new shape with the same element count.
    pub fn reshape(&self, extents: &[usize]) -> Result<Tensor> {
        Tensor::from_vec(extents, self.data.clone())
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Tensor {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    /// Elementwise `alpha * self + beta * other`.
    pub fn axpby(&self, alpha: f64, other: &Tensor, beta: f64) -> Result<Tensor> {
        self.check_same_shape(other)?;
        Ok(Tensor {
            shape: self.shape.clone(),
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| alpha * a + beta * b)
                .collect(),
        })
    }

    /// Sum of elementwise products over the flattened data.
    pub fn dot(&self, other: &Tensor) -> Result<f64> {
        self.check_same_shape(other)?;
        Ok(self.data.iter().zip(&other.data).map(|(a, b)| a * b).sum())
    }

    pub(crate) fn check_same_shape(&self, other: &Tensor) -> Result<()> {
        if self.shape != other.shape {
            return Err(Error::ShapeMismatch {
                left: self.shape.extents().to_vec(),
                right: other.shape.extents().to_vec(),
            });
        }
        Ok(())
    }

    pub(crate) fn expect_rank(&self, rank: usize, what: &str) -> Result<()> {
        if self.rank() != rank {
            return Err(Error::InvalidShape(format!(
                "{what} must have {rank} axes, got shape {}",
                self.shape
            )));
        }
        Ok(())
    }
}

/// Elements `start, start + step, ...` of a 1D tensor.
pub fn strided_slice_1d(t: &Tensor, start: usize, step: usize) -> Result<Tensor> {
    t.expect_rank(1, "strided slice input")?;
    if step == 0 {
        return Err(Error::InvalidArgument("slice step must be positive".into()));
    }
    if start >= t.len() {
        return Err(Error::IndexOutOfBounds {
            index: vec![start],
            shape: t.dims().to_vec(),
        });
    }
    let values: Vec<f64> = t.data[start..].iter().step_by(step).copied().collect();
    Tensor::vector(&values)
}

/// Largest absolute elementwise difference; zero iff the values are equal.
pub fn max_abs_diff(a: &Tensor, b: &Tensor) -> Result<f64> {
    a.check_same_shape(b)?;
    Ok(a.data
        .iter()
        .zip(&b.data)
        .fold(0.0_f64, |acc, (x, y)| acc.max((x - y).abs())))
}
