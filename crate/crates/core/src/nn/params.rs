use crate::error::{Error, Result};
use crate::rng::SeededRng;
use crate::scalar::Scalar;

/// A named block of the flat parameter vector, stored row-major.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ParamBlock {
    pub name: String,
    pub offset: usize,
    pub rows: usize,
    pub cols: usize,
}

impl ParamBlock {
    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn range(&self) -> std::ops::Range<usize> {
        self.offset..self.offset + self.len()
    }
}

/// Ordered, contiguous, non-overlapping blocks covering a flat vector.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ParamLayout {
    blocks: Vec<ParamBlock>,
    total: usize,
}

impl ParamLayout {
    pub fn new() -> Self {
        Self::default()
    }

    /// Appends a `rows x cols` block and returns its offset.
    pub fn push(&mut self, name: impl Into<String>, rows: usize, cols: usize) -> usize {
        let offset = self.total;
        self.blocks.push(ParamBlock {
            name: name.into(),
            offset,
            rows,
            cols,
        });
        self.total += rows * cols;
        offset
    }

    pub fn total(&self) -> usize {
        self.total
    }

    pub fn blocks(&self) -> &[ParamBlock] {
        &self.blocks
    }

    pub fn block(&self, name: &str) -> Option<&ParamBlock> {
        self.blocks.iter().find(|b| b.name == name)
    }

    /// Concatenates per-block values in layout order.
    pub fn pack<T: Scalar>(&self, parts: &[Vec<T>]) -> Result<Vec<T>> {
        if parts.len() != self.blocks.len() {
            return Err(Error::Dimension {
                context: "parameter blocks",
                expected: self.blocks.len(),
                actual: parts.len(),
            });
        }
        let mut out = Vec::with_capacity(self.total);
        for (b, p) in self.blocks.iter().zip(parts) {
            if p.len() != b.len() {
                return Err(Error::Dimension {
                    context: "parameter block size",
                    expected: b.len(),
                    actual: p.len(),
                });
            }
            out.extend_from_slice(p);
        }
        Ok(out)
    }

    /// Splits a flat vector into per-block values.
    pub fn unpack<T: Scalar>(&self, flat: &[T]) -> Result<Vec<Vec<T>>> {
        if flat.len() != self.total {
            return Err(Error::Dimension {
                context: "flat parameter vector",
                expected: self.total,
                actual: flat.len(),
            });
        }
        Ok(self.blocks.iter().map(|b| flat[b.range()].to_vec()).collect())
    }
}

/// Fills a `fan_in x fan_out` weight block uniformly in `+-sqrt(6 / (fan_in + fan_out))`.
pub fn xavier_uniform<T: Scalar>(out: &mut [T], fan_in: usize, fan_out: usize, rng: &mut SeededRng) {
    let limit = T::lit((6.0 / (fan_in + fan_out) as f64).sqrt());
    for v in out {
        *v = rng.uniform_in(-limit, limit);
    }
}
