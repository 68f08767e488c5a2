//! Sliding-window preprocessing: the per-node circular buffer that emits the
//! K x L window matrix at each sampling instant, and per-node normalization
//! statistics fitted on no-leak training data.

use crate::mat::Matrix;
use crate::scenario::Scenario;
use crate::{Error, Result};

/// The K x L matrix of the most recent `L` samples across all nodes.
/// Column `j` holds the sample at time `end_sample - L + 1 + j`.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowMatrix {
    pub values: Matrix,
    /// Sample index of the newest column.
    pub end_sample: usize,
}

impl WindowMatrix {
    pub fn nodes(&self) -> usize {
        self.values.rows()
    }

    pub fn len(&self) -> usize {
        self.values.cols()
    }

    pub fn is_empty(&self) -> bool {
        self.values.cols() == 0
    }
}

/// Circular buffer over incoming K-vectors. Holds the latest `L` samples;
/// reports ready only once `L` samples have arrived (the setup time).
#[derive(Debug, Clone)]
pub struct SampleBuffer {
    nodes: usize,
    window_len: usize,
    /// Column-major ring: slot `j` stores one K-vector at `j * nodes`.
    ring: Vec<f64>,
    pushes: usize,
}

impl SampleBuffer {
    pub fn new(nodes: usize, window_len: usize) -> Result<Self> {
        if nodes == 0 || window_len == 0 {
            return Err(Error::Config("buffer needs at least one node and one sample".into()));
        }
        Ok(SampleBuffer {
            nodes,
            window_len,
            ring: vec![0.0; nodes * window_len],
            pushes: 0,
        })
    }

    /// Appends one sample vector, discarding the oldest once full.
    pub fn push_sample(&mut self, sample: &[f64]) -> Result<()> {
        if sample.len() != self.nodes {
            return Err(Error::Shape(format!(
                "sample has {} entries, buffer expects {}",
                sample.len(),
                self.nodes
            )));
        }
        if sample.iter().any(|v| !v.is_finite()) {
            return Err(Error::Data("non-finite value pushed into the buffer".into()));
        }
        let slot = self.pushes % self.window_len;
        self.ring[slot * self.nodes..(slot + 1) * self.nodes].copy_from_slice(sample);
        self.pushes += 1;
        Ok(())
    }

    /// True once the setup period (one window length) has elapsed.
    pub fn ready(&self) -> bool {
        self.pushes >= self.window_len
    }

    /// Count of samples pushed so far; the newest sample has index `pushes - 1`.
    pub fn pushes(&self) -> usize {
        self.pushes
    }

    /// The current window with columns ordered oldest to newest.
    pub fn current_window(&self) -> Result<WindowMatrix> {
        if !self.ready() {
            return Err(Error::Data(format!(
                "buffer not ready: {} of {} samples received",
                self.pushes, self.window_len
            )));
        }
        let mut values = Matrix::zeros(self.nodes, self.window_len);
        for j in 0..self.window_len {
            let slot = (self.pushes + j) % self.window_len;
            let col = &self.ring[slot * self.nodes..(slot + 1) * self.nodes];
            for (k, v) in col.iter().enumerate() {
                values.set(k, j, *v);
            }
        }
        Ok(WindowMatrix { values, end_sample: self.pushes - 1 })
    }
}

/// Per-node standardization statistics fitted on training data.
#[derive(Debug, Clone, PartialEq)]
pub struct NormStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl NormStats {
    pub fn node_count(&self) -> usize {
        self.mean.len()
    }
}

/// Fits per-node mean and standard deviation over all samples of the given
/// no-leak scenarios. Population std (divide by N), so re-fitting on
/// standardized output gives exactly mean 0, std 1.
pub fn fit_stats(scenarios: &[&Scenario]) -> Result<NormStats> {
    let first = scenarios.first().ok_or_else(|| Error::Data("no training scenarios".into()))?;
    let nodes = first.node_count();
    if let Some(bad) = scenarios.iter().find(|s| s.label) {
        return Err(Error::Data(format!(
            "scenario {} is leak-labeled; normalization stats come from no-leak data only",
            bad.id
        )));
    }
    if scenarios.iter().any(|s| s.node_count() != nodes) {
        return Err(Error::Shape("scenarios disagree on node count".into()));
    }
    let total: usize = scenarios.iter().map(|s| s.sample_count()).sum();
    let mut mean = vec![0.0; nodes];
    for s in scenarios {
        for k in 0..nodes {
            mean[k] += s.pressures.row(k).iter().sum::<f64>();
        }
    }
    for m in mean.iter_mut() {
        *m /= total as f64;
    }
    let mut var = vec![0.0; nodes];
    for s in scenarios {
        for k in 0..nodes {
            var[k] += s.pressures.row(k).iter().map(|v| (v - mean[k]) * (v - mean[k])).sum::<f64>();
        }
    }
    let mut std = vec![0.0; nodes];
    for k in 0..nodes {
        let v = var[k] / total as f64;
        if v <= 0.0 {
            return Err(Error::Numerical(format!("node {k} has zero variance in the training data")));
        }
        std[k] = v.sqrt();
    }
    Ok(NormStats { mean, std })
}

/// Maps row `k` to `(row - mean_k) / std_k`.
pub fn normalize(window: &WindowMatrix, stats: &NormStats) -> Result<WindowMatrix> {
    if window.nodes() != stats.node_count() {
        return Err(Error::Shape(format!(
            "window has {} rows, stats have {}",
            window.nodes(),
            stats.node_count()
        )));
    }
    let mut values = window.values.clone();
    for k in 0..values.rows() {
        let (m, s) = (stats.mean[k], stats.std[k]);
        for v in values.row_mut(k) {
            *v = (*v - m) / s;
        }
    }
    Ok(WindowMatrix { values, end_sample: window.end_sample })
}

/// Inverse of [`normalize`].
pub fn denormalize(window: &WindowMatrix, stats: &NormStats) -> Result<WindowMatrix> {
    if window.nodes() != stats.node_count() {
        return Err(Error::Shape("window/stats node count mismatch".into()));
    }
    let mut values = window.values.clone();
    for k in 0..values.rows() {
        let (m, s) = (stats.mean[k], stats.std[k]);
        for v in values.row_mut(k) {
            *v = *v * s + m;
        }
    }
    Ok(WindowMatrix { values, end_sample: window.end_sample })
}

/// Standardizes a whole pressure series in place; per-element this is the
/// same affine map as [`normalize`], applied once per scenario instead of
/// once per window.
pub fn normalize_series(series: &Matrix, stats: &NormStats) -> Result<Matrix> {
    if series.rows() != stats.node_count() {
        return Err(Error::Shape(format!(
            "series has {} rows, stats have {}",
            series.rows(),
            stats.node_count()
        )));
    }
    let mut out = series.clone();
    for k in 0..out.rows() {
        let (m, s) = (stats.mean[k], stats.std[k]);
        for v in out.row_mut(k) {
            *v = (*v - m) / s;
        }
    }
    Ok(out)
}

/// Extracts the window ending at sample `end` from a series.
pub fn window_at(series: &Matrix, window_len: usize, end: usize) -> Result<WindowMatrix> {
    if end + 1 < window_len || end >= series.cols() {
        return Err(Error::Shape(format!(
            "window ending at {end} with length {window_len} does not fit in {} samples",
            series.cols()
        )));
    }
    let start = end + 1 - window_len;
    let mut values = Matrix::zeros(series.rows(), window_len);
    for k in 0..series.rows() {
        values.row_mut(k).copy_from_slice(&series.row(k)[start..=end]);
    }
    Ok(WindowMatrix { values, end_sample: end })
}

/// End samples of training windows taken every `stride` samples, starting at
/// the first full window.
pub fn window_ends(sample_count: usize, window_len: usize, stride: usize) -> Vec<usize> {
    if sample_count < window_len || stride == 0 {
        return Vec::new();
    }
    (window_len - 1..sample_count).step_by(stride).collect()
}
