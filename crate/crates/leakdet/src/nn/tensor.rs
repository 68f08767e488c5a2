//! Rank-3 tensor with `(batch, channels, length)` layout.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::{Error, Result};

/// Dense `f64` tensor, row-major over `(batch, channels, length)`.
///
/// Convolution weights reuse the same container with the interpretation
/// `(out_channels, in_channels, kernel)`; biases are `(1, out_channels, 1)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor3 {
    pub batch: usize,
    pub channels: usize,
    pub len: usize,
    data: Vec<f64>,
}

impl Tensor3 {
    pub fn zeros(batch: usize, channels: usize, len: usize) -> Self {
        Tensor3 { batch, channels, len, data: vec![0.0; batch * channels * len] }
    }

    /// Builds a tensor, validating size and finiteness.
    pub fn new(batch: usize, channels: usize, len: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != batch * channels * len {
            return Err(Error::Shape(format!(
                "tensor data length {} does not match {batch}x{channels}x{len}",
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numerical("non-finite value in tensor".into()));
        }
        Ok(Tensor3 { batch, channels, len, data })
    }

    pub fn scalar(v: f64) -> Self {
        Tensor3 { batch: 1, channels: 1, len: 1, data: vec![v] }
    }

    /// Seeded uniform fill in `[-bound, bound]`.
    pub fn uniform(batch: usize, channels: usize, len: usize, bound: f64, rng: &mut ChaCha8Rng) -> Self {
        let data = (0..batch * channels * len).map(|_| rng.gen_range(-bound..=bound)).collect();
        Tensor3 { batch, channels, len, data }
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        (self.batch, self.channels, self.len)
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    #[inline]
    pub fn row(&self, b: usize, c: usize) -> &[f64] {
        let start = (b * self.channels + c) * self.len;
        &self.data[start..start + self.len]
    }

    #[inline]
    pub fn row_mut(&mut self, b: usize, c: usize) -> &mut [f64] {
        let start = (b * self.channels + c) * self.len;
        &mut self.data[start..start + self.len]
    }

    #[inline]
    pub fn get(&self, b: usize, c: usize, i: usize) -> f64 {
        self.data[(b * self.channels + c) * self.len + i]
    }

    #[inline]
    pub fn set(&mut self, b: usize, c: usize, i: usize, v: f64) {
        self.data[(b * self.channels + c) * self.len + i] = v;
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Rounds every entry through `f32`. Applied to trained parameters so the
    /// 32-bit model file round-trips bit-exactly.
    pub fn quantize_f32(&mut self) {
        for v in self.data.iter_mut() {
            *v = *v as f32 as f64;
        }
    }
}
