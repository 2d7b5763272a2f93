//! Block layout bookkeeping for the stacked decision vector.
//!
//! The decision vector `x` is the concatenation of per-node blocks
//! `x_0, ..., x_{N-1}` with possibly different dimensions. A
//! [`PartitionLayout`] records the block sizes and offsets so that blocks can
//! be sliced out of (and scattered back into) the stacked vector without any
//! copying ambiguity.

use nalgebra::DVector;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PartitionLayout {
    block_dims: Vec<usize>,
    offsets: Vec<usize>,
    total_dim: usize,
}

impl PartitionLayout {
    /// Builds a layout from per-block dimensions. Every block must be
    /// non-empty and at least one block must exist.
    pub fn new(block_dims: &[usize]) -> Result<Self> {
        if block_dims.is_empty() {
            return Err(Error::InvalidLayout("no blocks".into()));
        }
        if let Some(i) = block_dims.iter().position(|&d| d == 0) {
            return Err(Error::InvalidLayout(format!("block {i} has dimension 0")));
        }
        let mut offsets = Vec::with_capacity(block_dims.len());
        let mut total = 0usize;
        for &d in block_dims {
            offsets.push(total);
            total += d;
        }
        Ok(Self {
            block_dims: block_dims.to_vec(),
            offsets,
            total_dim: total,
        })
    }

    /// Layout with `num_blocks` scalar blocks.
    pub fn scalar_blocks(num_blocks: usize) -> Result<Self> {
        Self::new(&vec![1; num_blocks])
    }

    pub fn num_blocks(&self) -> usize {
        self.block_dims.len()
    }

    pub fn total_dim(&self) -> usize {
        self.total_dim
    }

    pub fn block_dims(&self) -> &[usize] {
        &self.block_dims
    }

    pub fn block_dim(&self, i: usize) -> usize {
        self.block_dims[i]
    }

    pub fn offset(&self, i: usize) -> usize {
        self.offsets[i]
    }

    pub fn range(&self, i: usize) -> std::ops::Range<usize> {
        self.offsets[i]..self.offsets[i] + self.block_dims[i]
    }

    fn check_block(&self, i: usize) -> Result<()> {
        if i >= self.num_blocks() {
            return Err(Error::BlockIndex {
                index: i,
                count: self.num_blocks(),
            });
        }
        Ok(())
    }

    fn check_total(&self, len: usize) -> Result<()> {
        if len != self.total_dim {
            return Err(Error::DimensionMismatch {
                expected: self.total_dim,
                got: len,
            });
        }
        Ok(())
    }

    /// Copies block `i` out of the stacked vector.
    pub fn extract_block(&self, x: &DVector<f64>, i: usize) -> Result<DVector<f64>> {
        self.check_block(i)?;
        self.check_total(x.len())?;
        Ok(x.rows(self.offsets[i], self.block_dims[i]).into_owned())
    }

    /// Embeds a block value into a zero vector of full dimension.
    pub fn lift_block(&self, v: &DVector<f64>, i: usize) -> Result<DVector<f64>> {
        self.check_block(i)?;
        if v.len() != self.block_dims[i] {
            return Err(Error::DimensionMismatch {
                expected: self.block_dims[i],
                got: v.len(),
            });
        }
        let mut out = DVector::zeros(self.total_dim);
        out.rows_mut(self.offsets[i], self.block_dims[i]).copy_from(v);
        Ok(out)
    }

    /// Overwrites block `i` of `x` in place.
    pub fn set_block(&self, x: &mut DVector<f64>, i: usize, v: &DVector<f64>) -> Result<()> {
        self.check_block(i)?;
        self.check_total(x.len())?;
        if v.len() != self.block_dims[i] {
            return Err(Error::DimensionMismatch {
                expected: self.block_dims[i],
                got: v.len(),
            });
        }
        x.rows_mut(self.offsets[i], self.block_dims[i]).copy_from(v);
        Ok(())
    }
}
