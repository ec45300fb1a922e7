//! Dense row-major tensor.

use super::{NnError, Real};

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<F> {
    dims: Vec<usize>,
    values: Vec<F>,
}

impl<F: Real> Tensor<F> {
    pub fn zeros(dims: &[usize]) -> Self {
        let n = dims.iter().product();
        Self {
            dims: dims.to_vec(),
            values: vec![F::zero(); n],
        }
    }

    pub fn from_values(dims: Vec<usize>, values: Vec<F>) -> Result<Self, NnError> {
        let n: usize = dims.iter().product();
        if n != values.len() {
            return Err(NnError::ShapeMismatch(format!(
                "{} values for dims {:?} (need {})",
                values.len(),
                dims,
                n
            )));
        }
        Ok(Self { dims, values })
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn values(&self) -> &[F] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [F] {
        &mut self.values
    }

    pub fn numel(&self) -> usize {
        self.values.len()
    }

    pub fn all_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    /// Leading dimension, used as the batch size of batched tensors.
    pub fn batch_len(&self) -> usize {
        self.dims.first().copied().unwrap_or(0)
    }

    /// Contiguous slice of one leading-dimension entry.
    pub fn row(&self, index: usize) -> &[F] {
        let stride = self.numel() / self.batch_len().max(1);
        &self.values[index * stride..(index + 1) * stride]
    }
}
