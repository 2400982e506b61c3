//! Dense tensor storage and mode-n matricization.
//!
//! A [`DenseTensor`] stores an order-N array in a flat buffer with the
//! *first index varying fastest*: element `(i_1, ..., i_N)` lives at linear
//! position `i_1 + I_1*(i_2 + I_2*(i_3 + ...))`. This is the column-major
//! convention generalized to N modes, so the mode-1 matricization of a
//! matrix is the matrix itself.
//!
//! The mode-n matricization arranges the mode-n fibers as columns: element
//! `(i_1, ..., i_N)` maps to row `i_n` and to the column indexed by the
//! remaining indices with the lowest mode varying fastest. Together with the
//! Khatri-Rao ordering in [`crate::kruskal`], this makes
//! `matricize(reconstruct(k), n) = k.factor(n) * k.khatri_rao_all_but(n)^T`
//! hold exactly.

use crate::error::{Error, Result};
use crate::linalg::Matrix;

/// Order-N dense tensor of `f64` values with an explicit shape.
///
/// Immutable after construction; all operations are pure functions, so
/// tensors can be shared freely across threads.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseTensor {
    shape: Vec<usize>,
    values: Vec<f64>,
}

impl DenseTensor {
    /// Build a tensor from a shape and a flat value buffer in linearization
    /// order (first index fastest).
    pub fn from_values(shape: Vec<usize>, values: Vec<f64>) -> Result<Self> {
        if shape.len() < 2 {
            return Err(Error::invalid(format!(
                "tensor order must be at least 2, got {}",
                shape.len()
            )));
        }
        if shape.iter().any(|&d| d == 0) {
            return Err(Error::invalid("tensor dimensions must be positive"));
        }
        let expected: usize = shape.iter().product();
        if values.len() != expected {
            return Err(Error::shape(format!(
                "shape {:?} holds {} values, got {}",
                shape,
                expected,
                values.len()
            )));
        }
        Ok(DenseTensor { shape, values })
    }

    pub fn zeros(shape: Vec<usize>) -> Result<Self> {
        let len = shape.iter().product();
        Self::from_values(shape, vec![0.0; len])
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    /// Number of modes.
    pub fn order(&self) -> usize {
        self.shape.len()
    }

    /// Total number of stored elements.
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Flat value buffer in linearization order.
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Linear position of a multi-index, first index fastest.
    pub fn linear_index(&self, index: &[usize]) -> Result<usize> {
        if index.len() != self.order() {
            return Err(Error::invalid(format!(
                "index of length {} for order-{} tensor",
                index.len(),
                self.order()
            )));
        }
        let mut pos = 0usize;
        let mut stride = 1usize;
        for (n, (&i, &dim)) in index.iter().zip(&self.shape).enumerate() {
            if i >= dim {
                return Err(Error::invalid(format!(
                    "index {} out of range for mode {} of size {}",
                    i, n, dim
                )));
            }
            pos += i * stride;
            stride *= dim;
        }
        Ok(pos)
    }

    pub fn get(&self, index: &[usize]) -> Result<f64> {
        Ok(self.values[self.linear_index(index)?])
    }

    /// Elementwise map into a new tensor with the same shape.
    pub fn map(&self, mut f: impl FnMut(f64) -> f64) -> DenseTensor {
        DenseTensor {
            shape: self.shape.clone(),
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    /// Elementwise combination of two tensors of identical shape.
    pub fn zip_with(&self, other: &DenseTensor, f: impl Fn(f64, f64) -> f64) -> Result<DenseTensor> {
        if self.shape != other.shape {
            return Err(Error::shape(format!(
                "tensors of shape {:?} and {:?}",
                self.shape, other.shape
            )));
        }
        Ok(DenseTensor {
            shape: self.shape.clone(),
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    /// Square root of the sum of squared elements.
    pub fn frobenius_norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Largest element value (not absolute value).
    pub fn max_value(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Largest absolute element value.
    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    /// Mode-n matricization: an `I_n x (prod of other dims)` matrix whose
    /// columns are the mode-n fibers, remaining indices ordered with the
    /// lowest mode fastest.
    pub fn matricize(&self, mode: usize) -> Result<Matrix> {
        if mode >= self.order() {
            return Err(Error::ModeOutOfRange {
                mode,
                order: self.order(),
            });
        }
        let rows = self.shape[mode];
        let cols = self.len() / rows;
        // stride of the mode index in the linearization; empty product is 1
        let stride: usize = self.shape[..mode].iter().product();
        let mut m = Matrix::zeros(rows, cols);
        for (p, &v) in self.values.iter().enumerate() {
            let low = p % stride;
            let row = (p / stride) % rows;
            let high = p / (stride * rows);
            m[(row, low + stride * high)] = v;
        }
        Ok(m)
    }
}

/// Inverse of [`DenseTensor::matricize`]: rebuild a tensor of the given
/// shape from its mode-n unfolding.
pub fn fold(m: &Matrix, mode: usize, shape: &[usize]) -> Result<DenseTensor> {
    if mode >= shape.len() {
        return Err(Error::ModeOutOfRange {
            mode,
            order: shape.len(),
        });
    }
    let total: usize = shape.iter().product();
    let rows = shape[mode];
    let cols = total / rows;
    if m.nrows() != rows || m.ncols() != cols {
        return Err(Error::shape(format!(
            "mode-{} unfolding of shape {:?} is {}x{}, got {}x{}",
            mode,
            shape,
            rows,
            cols,
            m.nrows(),
            m.ncols()
        )));
    }
    let stride: usize = shape[..mode].iter().product();
    let mut values = vec![0.0; total];
    for (p, v) in values.iter_mut().enumerate() {
        let low = p % stride;
        let row = (p / stride) % rows;
        let high = p / (stride * rows);
        *v = m[(row, low + stride * high)];
    }
    DenseTensor::from_values(shape.to_vec(), values)
}
