//! Dense per-pixel containers shared by every stage of the pipeline.

use crate::error::{Error, Result};

/// Per-pixel embedding vectors, stored row-major as `[y][x][dim]`.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingMap {
    height: usize,
    width: usize,
    dims: usize,
    values: Vec<f64>,
}

impl EmbeddingMap {
    pub fn zeros(height: usize, width: usize, dims: usize) -> Self {
        Self { height, width, dims, values: vec![0.0; height * width * dims] }
    }

    /// Wraps a row-major `[y][x][dim]` buffer. Rejects non-finite values.
    pub fn from_vec(height: usize, width: usize, dims: usize, values: Vec<f64>) -> Result<Self> {
        if dims == 0 {
            return Err(Error::InvalidInput("embedding dims must be at least 1".into()));
        }
        if values.len() != height * width * dims {
            return Err(Error::ShapeMismatch {
                expected: format!("{height}x{width}x{dims} = {}", height * width * dims),
                found: format!("{} values", values.len()),
            });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("embedding map".into()));
        }
        Ok(Self { height, width, dims, values })
    }

    /// Builds a map pixel by pixel.
    pub fn from_fn(height: usize, width: usize, dims: usize, mut f: impl FnMut(usize, usize, usize) -> f64) -> Self {
        let mut values = Vec::with_capacity(height * width * dims);
        for y in 0..height {
            for x in 0..width {
                for d in 0..dims {
                    values.push(f(y, x, d));
                }
            }
        }
        Self { height, width, dims, values }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn dims(&self) -> usize {
        self.dims
    }

    pub fn num_pixels(&self) -> usize {
        self.height * self.width
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.values
    }

    /// Embedding of the pixel with flat row-major index `i`.
    #[inline]
    pub fn pixel(&self, i: usize) -> &[f64] {
        &self.values[i * self.dims..(i + 1) * self.dims]
    }

    #[inline]
    pub fn pixel_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.values[i * self.dims..(i + 1) * self.dims]
    }

    pub fn at(&self, y: usize, x: usize) -> &[f64] {
        self.pixel(y * self.width + x)
    }

    pub(crate) fn check_labels(&self, labels: &LabelMap) -> Result<()> {
        if labels.height() != self.height || labels.width() != self.width {
            return Err(Error::ShapeMismatch {
                expected: format!("{}x{}", self.height, self.width),
                found: format!("{}x{}", labels.height(), labels.width()),
            });
        }
        Ok(())
    }
}

/// Integer instance labels; 0 marks background or ignored pixels.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct LabelMap {
    height: usize,
    width: usize,
    values: Vec<u32>,
}

impl LabelMap {
    pub fn zeros(height: usize, width: usize) -> Self {
        Self { height, width, values: vec![0; height * width] }
    }

    pub fn from_vec(height: usize, width: usize, values: Vec<u32>) -> Result<Self> {
        if values.len() != height * width {
            return Err(Error::ShapeMismatch {
                expected: format!("{height}x{width}"),
                found: format!("{} values", values.len()),
            });
        }
        Ok(Self { height, width, values })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn num_pixels(&self) -> usize {
        self.values.len()
    }

    pub fn as_slice(&self) -> &[u32] {
        &self.values
    }

    pub fn as_mut_slice(&mut self) -> &mut [u32] {
        &mut self.values
    }

    pub fn get(&self, y: usize, x: usize) -> u32 {
        self.values[y * self.width + x]
    }

    pub fn set(&mut self, y: usize, x: usize, label: u32) {
        self.values[y * self.width + x] = label;
    }

    /// Distinct nonzero labels in ascending order.
    pub fn distinct_labels(&self) -> Vec<u32> {
        let mut labels: Vec<u32> = self.values.iter().copied().filter(|&l| l != 0).collect();
        labels.sort_unstable();
        labels.dedup();
        labels
    }

    pub fn num_instances(&self) -> usize {
        self.distinct_labels().len()
    }

    /// Nonzero pixels as a boolean mask.
    pub fn foreground(&self) -> Mask {
        Mask { height: self.height, width: self.width, values: self.values.iter().map(|&l| l != 0).collect() }
    }

    /// Keeps labels where `keep` is set, zeroes everything else.
    pub fn restricted_to(&self, keep: &Mask) -> Result<Self> {
        keep.check_shape(self.height, self.width)?;
        Ok(Self {
            height: self.height,
            width: self.width,
            values: self.values.iter().zip(keep.as_slice()).map(|(&l, &k)| if k { l } else { 0 }).collect(),
        })
    }

    /// Renumbers nonzero labels to 1..K in order of first appearance (row-major).
    pub fn relabeled_contiguous(&self) -> Self {
        let mut mapping = std::collections::HashMap::new();
        let values = self
            .values
            .iter()
            .map(|&l| {
                if l == 0 {
                    0
                } else {
                    let next = mapping.len() as u32 + 1;
                    *mapping.entry(l).or_insert(next)
                }
            })
            .collect();
        Self { height: self.height, width: self.width, values }
    }
}

/// Binary pixel mask.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Mask {
    height: usize,
    width: usize,
    values: Vec<bool>,
}

impl Mask {
    pub fn new(height: usize, width: usize, values: Vec<bool>) -> Result<Self> {
        if values.len() != height * width {
            return Err(Error::ShapeMismatch {
                expected: format!("{height}x{width}"),
                found: format!("{} values", values.len()),
            });
        }
        Ok(Self { height, width, values })
    }

    pub fn empty(height: usize, width: usize) -> Self {
        Self { height, width, values: vec![false; height * width] }
    }

    pub fn full(height: usize, width: usize) -> Self {
        Self { height, width, values: vec![true; height * width] }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn as_slice(&self) -> &[bool] {
        &self.values
    }

    pub fn count(&self) -> usize {
        self.values.iter().filter(|&&v| v).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.values.iter().any(|&v| v)
    }

    pub fn intersection_count(&self, other: &Mask) -> usize {
        self.values.iter().zip(&other.values).filter(|(&a, &b)| a && b).count()
    }

    pub(crate) fn check_shape(&self, height: usize, width: usize) -> Result<()> {
        if self.height != height || self.width != width {
            return Err(Error::ShapeMismatch {
                expected: format!("{height}x{width}"),
                found: format!("{}x{}", self.height, self.width),
            });
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_wrong_length_and_nan() {
        assert!(EmbeddingMap::from_vec(2, 2, 2, vec![0.0; 7]).is_err());
        assert!(EmbeddingMap::from_vec(1, 1, 1, vec![f64::NAN]).is_err());
        assert!(EmbeddingMap::from_vec(1, 1, 0, vec![]).is_err());
        assert!(LabelMap::from_vec(2, 3, vec![0; 5]).is_err());
    }

    #[test]
    fn contiguous_relabel_follows_scan_order() {
        let labels = LabelMap::from_vec(2, 3, vec![0, 7, 7, 3, 0, 9]).unwrap();
        let r = labels.relabeled_contiguous();
        assert_eq!(r.as_slice(), &[0, 1, 1, 2, 0, 3]);
        assert_eq!(labels.distinct_labels(), vec![3, 7, 9]);
    }
}
