//! Turning score traces into decisions: causal moving-average smoothing,
//! FPR-calibrated thresholding, the binary alarm rule, leak-onset
//! estimation, and node-count adaptation for foreign networks.

use serde::{Deserialize, Serialize};

use crate::mat::Matrix;
use crate::model_file::ModelBundle;
use crate::ocsvm::anomaly_score;
use crate::scenario::Scenario;
use crate::window::normalize_series;
use crate::{Error, Result};

/// How validation scores are pooled when calibrating the threshold.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FprMode {
    /// Quantile over every smoothed validation sample: the target FPR is the
    /// expected fraction of individual no-leak samples above the threshold.
    PerSample,
    /// Quantile over each validation trace's maximum smoothed score: the
    /// target FPR is the expected fraction of no-leak scenarios that ever
    /// alarm.
    PerScenarioMax,
}

/// Detection-side configuration.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DetectorConfig {
    /// Moving-average length in samples.
    pub smoothing: usize,
    pub target_fpr: f64,
    pub fpr_mode: FprMode,
    pub sample_period_hours: f64,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        DetectorConfig {
            smoothing: 48,
            target_fpr: 0.10,
            fpr_mode: FprMode::PerSample,
            sample_period_hours: 0.5,
        }
    }
}

/// Raw and smoothed anomaly scores for one scenario. Index `i` corresponds
/// to sample `start_sample + i`.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreTrace {
    pub start_sample: usize,
    pub raw: Vec<f64>,
    pub smoothed: Vec<f64>,
}

/// Outcome of running the detector on one scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct DetectionResult {
    /// 1 iff any smoothed score reached the threshold.
    pub decision: bool,
    /// First alarming sample index, if any.
    pub first_alarm_sample: Option<usize>,
    /// `first_alarm_sample * sample_period`, in hours.
    pub first_alarm_hours: Option<f64>,
    pub trace: ScoreTrace,
}

/// Causal moving average: at position `n` the mean of the most recent
/// `min(s, n+1)` raw scores, so the start of the sequence ramps in over the
/// available prefix.
pub fn smooth(raw: &[f64], s: usize) -> Result<Vec<f64>> {
    if raw.is_empty() {
        return Err(Error::Data("cannot smooth an empty score sequence".into()));
    }
    if s == 0 {
        return Err(Error::Config("smoothing length must be at least 1".into()));
    }
    let mut out = Vec::with_capacity(raw.len());
    let mut acc = 0.0;
    for n in 0..raw.len() {
        acc += raw[n];
        if n >= s {
            acc -= raw[n - s];
        }
        out.push(acc / s.min(n + 1) as f64);
    }
    Ok(out)
}

/// Empirical quantile with linear interpolation between closest ranks.
fn quantile(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let pos = p * (n - 1) as f64;
    let lo = pos.floor() as usize;
    let frac = pos - lo as f64;
    if lo + 1 >= n {
        sorted[n - 1]
    } else {
        sorted[lo] + frac * (sorted[lo + 1] - sorted[lo])
    }
}

/// Calibrates the threshold as the empirical `(1 - FPR)` quantile of the
/// pooled smoothed no-leak validation scores (or of per-trace maxima, see
/// [`FprMode`]).
pub fn calibrate_threshold(smoothed_traces: &[Vec<f64>], target_fpr: f64, mode: FprMode) -> Result<f64> {
    if !(target_fpr > 0.0 && target_fpr < 1.0) {
        return Err(Error::Config(format!("target FPR {target_fpr} not in (0, 1)")));
    }
    let mut pool: Vec<f64> = match mode {
        FprMode::PerSample => smoothed_traces.iter().flatten().copied().collect(),
        FprMode::PerScenarioMax => smoothed_traces
            .iter()
            .filter(|t| !t.is_empty())
            .map(|t| t.iter().cloned().fold(f64::NEG_INFINITY, f64::max))
            .collect(),
    };
    if pool.is_empty() {
        return Err(Error::Data("empty validation score pool".into()));
    }
    pool.sort_by(|a, b| a.partial_cmp(b).expect("finite scores"));
    Ok(quantile(&pool, 1.0 - target_fpr))
}

/// Threshold rule: alarm at `n` iff the smoothed score is `>= gamma`
/// (boundary inclusive).
pub fn classify(smoothed: &[f64], gamma: f64) -> Vec<bool> {
    smoothed.iter().map(|s| *s >= gamma).collect()
}

/// First alarm: smallest `n` with an alarm, mapped to hours. `offset` is the
/// sample index of the first entry of the flag sequence.
pub fn leak_start(flags: &[bool], offset: usize, sample_period_hours: f64) -> Option<(usize, f64)> {
    flags
        .iter()
        .position(|f| *f)
        .map(|i| (offset + i, (offset + i) as f64 * sample_period_hours))
}

/// Repeats rows cyclically until a `K' x L` window becomes `K x L`
/// (row `i` of the output is input row `i mod K'`). Downsizing is not
/// supported.
pub fn adapt_node_count(window: &Matrix, target_rows: usize) -> Result<Matrix> {
    let have = window.rows();
    if have > target_rows {
        return Err(Error::Shape(format!(
            "cannot adapt {have} rows down to {target_rows}: node replication only grows inputs"
        )));
    }
    if have == target_rows {
        return Ok(window.clone());
    }
    let mut out = Matrix::zeros(target_rows, window.cols());
    for i in 0..target_rows {
        out.row_mut(i).copy_from_slice(window.row(i % have));
    }
    Ok(out)
}

/// Per-node mean/std over the setup window (the first `window_len` samples).
/// Used to standardize foreign networks, whose nodes have no counterpart in
/// the trained normalization stats; the setup period is leak-free by
/// construction, so these moments describe normal behavior.
pub fn setup_window_stats(series: &Matrix, window_len: usize) -> Result<crate::window::NormStats> {
    let mut mean = Vec::with_capacity(series.rows());
    let mut std = Vec::with_capacity(series.rows());
    for k in 0..series.rows() {
        let row = &series.row(k)[..window_len.min(series.cols())];
        let m = crate::mat::mean(row);
        let v = crate::mat::population_variance(row);
        if v <= 0.0 {
            return Err(Error::Numerical(format!("node {k} has zero variance over the setup window")));
        }
        mean.push(m);
        std.push(v.sqrt());
    }
    Ok(crate::window::NormStats { mean, std })
}

/// Scores a scenario: node adaptation if it has fewer nodes than the model,
/// per-node normalization, encoder features, one-class SVM scores and causal
/// smoothing. No threshold is applied yet.
pub fn score_trace(scenario: &Scenario, bundle: &ModelBundle, cfg: &DetectorConfig) -> Result<ScoreTrace> {
    let window_len = bundle.window_len();
    if scenario.sample_count() < window_len {
        return Err(Error::Shape(format!(
            "scenario {} has {} samples, shorter than the setup window {window_len}",
            scenario.id,
            scenario.sample_count()
        )));
    }
    let normalized = if scenario.node_count() == bundle.nodes() {
        normalize_series(&scenario.pressures, &bundle.norm)?
    } else {
        // Foreign network: standardize each node against its own setup
        // window, then replicate rows cyclically up to the model's width.
        let stats = setup_window_stats(&scenario.pressures, window_len)?;
        adapt_node_count(&normalize_series(&scenario.pressures, &stats)?, bundle.nodes())?
    };
    let embeddings = bundle.encoder.scan_embeddings(&normalized)?;

    let mut raw = Vec::with_capacity(embeddings.len());
    for e in &embeddings {
        raw.push(anomaly_score(&e.values, &bundle.ocsvm)?);
    }
    let smoothed = smooth(&raw, cfg.smoothing)?;
    Ok(ScoreTrace { start_sample: window_len - 1, raw, smoothed })
}

/// Streams a scenario through the full pipeline and applies the threshold
/// rule to the smoothed scores.
pub fn run_pipeline(scenario: &Scenario, bundle: &ModelBundle, gamma: f64, cfg: &DetectorConfig) -> Result<DetectionResult> {
    let trace = score_trace(scenario, bundle, cfg)?;
    let flags = classify(&trace.smoothed, gamma);
    let first = leak_start(&flags, trace.start_sample, scenario.sample_period_hours);
    Ok(DetectionResult {
        decision: first.is_some(),
        first_alarm_sample: first.map(|(n, _)| n),
        first_alarm_hours: first.map(|(_, t)| t),
        trace,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn smoothing_with_length_one_is_identity() {
        let raw = vec![0.3, -0.1, 0.7, 0.0];
        assert_eq!(smooth(&raw, 1).unwrap(), raw);
    }

    #[test]
    fn constant_input_stays_constant() {
        let raw = vec![2.5; 20];
        let s = smooth(&raw, 6).unwrap();
        assert!(s.iter().all(|v| (v - 2.5).abs() < 1e-12));
    }

    #[test]
    fn unit_impulse_becomes_boxcar_plateau() {
        // Hand-convolved: an impulse at n0 = 5 with S = 4 yields 0.25 on
        // samples 5..=8 and 0 elsewhere (n0 is past the ramp-in).
        let mut raw = vec![0.0; 16];
        raw[5] = 1.0;
        let s = smooth(&raw, 4).unwrap();
        for (n, v) in s.iter().enumerate() {
            let expect = if (5..=8).contains(&n) { 0.25 } else { 0.0 };
            assert!((v - expect).abs() < 1e-15, "sample {n}: {v} vs {expect}");
        }
    }

    #[test]
    fn ramp_in_uses_available_prefix() {
        let raw = vec![1.0, 0.0, 0.0, 0.0];
        let s = smooth(&raw, 4).unwrap();
        assert_eq!(s, vec![1.0, 0.5, 1.0 / 3.0, 0.25]);
    }

    #[test]
    fn empty_scores_error() {
        assert!(smooth(&[], 4).is_err());
    }

    #[test]
    fn uniform_pool_quantile() {
        // Pooled scores uniform on [0, 1): the 90% quantile sits near 0.9.
        let trace: Vec<f64> = (0..10_000).map(|i| i as f64 / 10_000.0).collect();
        let gamma = calibrate_threshold(&[trace], 0.10, FprMode::PerSample).unwrap();
        assert!((gamma - 0.9).abs() < 1e-3, "gamma {gamma}");
    }

    #[test]
    fn degenerate_fpr_rejected() {
        let trace = vec![vec![0.0, 1.0]];
        assert!(calibrate_threshold(&trace, 1.0, FprMode::PerSample).is_err());
        assert!(calibrate_threshold(&trace, 0.0, FprMode::PerSample).is_err());
        assert!(calibrate_threshold(&[], 0.1, FprMode::PerSample).is_err());
    }

    #[test]
    fn per_scenario_mode_pools_maxima() {
        let traces = vec![vec![0.1, 0.2], vec![0.9, 0.3], vec![0.5, 0.6]];
        // Maxima are [0.2, 0.9, 0.6]; the median (FPR 0.5) is 0.6.
        let gamma = calibrate_threshold(&traces, 0.5, FprMode::PerScenarioMax).unwrap();
        assert!((gamma - 0.6).abs() < 1e-12);
    }

    #[test]
    fn boundary_is_inclusive() {
        let flags = classify(&[0.5, 0.7, 0.69999], 0.7);
        assert_eq!(flags, vec![false, true, false]);
    }

    #[test]
    fn all_below_threshold_gives_all_zero() {
        let flags = classify(&[0.1, 0.2, 0.3], 10.0);
        assert!(flags.iter().all(|f| !f));
    }

    #[test]
    fn leak_start_arithmetic() {
        // First alarm at sample 80 with a 0.5 h period: 40 h.
        let mut flags = vec![false; 100];
        flags[80] = true;
        flags[81] = true;
        flags[90] = true;
        let (n, t) = leak_start(&flags, 0, 0.5).unwrap();
        assert_eq!(n, 80);
        assert_eq!(t, 40.0);

        assert!(leak_start(&vec![false; 10], 0, 0.5).is_none());

        let mut sparse = vec![false; 100];
        for i in [50, 51, 90] {
            sparse[i] = true;
        }
        assert_eq!(leak_start(&sparse, 0, 0.5).unwrap().0, 50);
    }

    #[test]
    fn adaptation_identity_and_cyclic_rule() {
        let m = Matrix::from_vec(2, 3, vec![0.0, 1.0, 2.0, 10.0, 11.0, 12.0]).unwrap();
        assert_eq!(adapt_node_count(&m, 2).unwrap(), m);
        let grown = adapt_node_count(&m, 5).unwrap();
        for (i, expect_row) in [0usize, 1, 0, 1, 0].iter().enumerate() {
            assert_eq!(grown.row(i), m.row(*expect_row));
        }
        assert!(adapt_node_count(&m, 1).is_err());
    }

    #[test]
    fn hanoi_sized_window_adapts_to_modena_size() {
        // 31 nodes replicated up to a 268-node model input.
        let m = Matrix::zeros(31, 336);
        let grown = adapt_node_count(&m, 268).unwrap();
        assert_eq!(grown.rows(), 268);
        assert_eq!(grown.cols(), 336);
    }

    proptest! {
        // Raising the threshold can only shrink the alarm set.
        #[test]
        fn threshold_monotonicity(scores in proptest::collection::vec(-5.0f64..5.0, 1..60),
                                  g1 in -5.0f64..5.0, bump in 0.0f64..3.0) {
            let g2 = g1 + bump;
            let low = classify(&scores, g1);
            let high = classify(&scores, g2);
            for (l, h) in low.iter().zip(&high) {
                prop_assert!(*l || !*h, "alarm at high threshold missing at low threshold");
            }
        }

        // Smoothing is causal: a perturbation after n never changes output at n.
        #[test]
        fn smoothing_is_causal(scores in proptest::collection::vec(-2.0f64..2.0, 2..40), s in 1usize..10) {
            let cut = scores.len() / 2;
            let mut altered = scores.clone();
            for v in altered.iter_mut().skip(cut + 1) { *v += 1.0; }
            let a = smooth(&scores, s).unwrap();
            let b = smooth(&altered, s).unwrap();
            for n in 0..=cut {
                prop_assert_eq!(a[n], b[n]);
            }
        }
    }
}
