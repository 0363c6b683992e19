//! Block-structured vectors for stacked agent states.
//!
//! Positions, velocities, relative positions and distance errors are all
//! flat `f64` vectors with a block structure on top: `n` agent blocks of
//! size `d`, `|E|` edge blocks of size `d`, or `|E|` scalar blocks. The
//! block layout is part of the value and checked on construction.

use nalgebra::DVector;

use crate::error::NetworkError;

/// A flat vector of `block_count` contiguous blocks of `block_size` reals.
#[derive(Debug, Clone, PartialEq)]
pub struct StackedVector {
    data: Vec<f64>,
    block_size: usize,
    block_count: usize,
}

impl StackedVector {
    /// Wraps `data` as `block_count` blocks of `block_size`.
    pub fn new(data: Vec<f64>, block_size: usize, block_count: usize) -> Result<Self, NetworkError> {
        if data.len() != block_size * block_count {
            return Err(NetworkError::DimensionMismatch {
                expected: block_size * block_count,
                actual: data.len(),
            });
        }
        Ok(Self { data, block_size, block_count })
    }

    pub fn zeros(block_size: usize, block_count: usize) -> Self {
        Self { data: vec![0.0; block_size * block_count], block_size, block_count }
    }

    /// Builds from per-block rows, all of length `block_size`.
    pub fn from_blocks(blocks: &[Vec<f64>], block_size: usize) -> Result<Self, NetworkError> {
        let mut data = Vec::with_capacity(blocks.len() * block_size);
        for b in blocks {
            if b.len() != block_size {
                return Err(NetworkError::DimensionMismatch { expected: block_size, actual: b.len() });
            }
            data.extend_from_slice(b);
        }
        Ok(Self { data, block_size, block_count: blocks.len() })
    }

    pub fn block_size(&self) -> usize {
        self.block_size
    }

    pub fn block_count(&self) -> usize {
        self.block_count
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn block(&self, i: usize) -> &[f64] {
        &self.data[i * self.block_size..(i + 1) * self.block_size]
    }

    pub fn block_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.block_size..(i + 1) * self.block_size]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn to_dvector(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.data)
    }

    pub fn norm(&self) -> f64 {
        self.data.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    /// `self + alpha * other`, blockwise layouts must match.
    pub fn axpy(&mut self, alpha: f64, other: &StackedVector) {
        assert_eq!(self.data.len(), other.data.len(), "stacked vector length mismatch");
        for (a, b) in self.data.iter_mut().zip(other.data.iter()) {
            *a += alpha * b;
        }
    }

    pub fn scale(&mut self, alpha: f64) {
        for a in &mut self.data {
            *a *= alpha;
        }
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_wrong_length() {
        assert!(StackedVector::new(vec![1.0, 2.0, 3.0], 2, 2).is_err());
        assert!(StackedVector::new(vec![1.0, 2.0, 3.0, 4.0], 2, 2).is_ok());
    }

    #[test]
    fn block_access() {
        let v = StackedVector::new(vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0], 2, 3).unwrap();
        assert_eq!(v.block(0), &[1.0, 2.0]);
        assert_eq!(v.block(2), &[5.0, 6.0]);
        assert_eq!(v.block_count(), 3);
    }

    #[test]
    fn axpy_and_norm() {
        let mut a = StackedVector::new(vec![3.0, 4.0], 1, 2).unwrap();
        let b = StackedVector::new(vec![1.0, 1.0], 1, 2).unwrap();
        assert_eq!(a.norm(), 5.0);
        a.axpy(2.0, &b);
        assert_eq!(a.as_slice(), &[5.0, 6.0]);
    }
}
