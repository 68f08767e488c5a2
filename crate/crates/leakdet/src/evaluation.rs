//! Scenario-level metrics and experiment sweeps: accuracy, detection delay,
//! test-time noise robustness and cross-network transfer.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::detector::{run_pipeline, DetectionResult, DetectorConfig};
use crate::model_file::ModelBundle;
use crate::scenario::{add_noise, derive_seed, Scenario, SnrReference};
use crate::{Error, Result};

/// Per-scenario evaluation row.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScenarioOutcome {
    pub id: String,
    /// True label.
    pub label: u8,
    /// Detector decision.
    pub decision: u8,
    /// Ground-truth onset, hours (leak scenarios only).
    pub onset_hours: Option<f64>,
    /// First alarm, hours.
    pub alarm_hours: Option<f64>,
    /// `alarm - onset` for true positives; alarms that precede the onset
    /// count the scenario as a false positive and leave this empty.
    pub detection_delay_hours: Option<f64>,
    pub correct: u8,
}

/// Aggregated report for one evaluation condition.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalReport {
    /// Condition tag: "clean", "snr45", a network name, ...
    pub condition: String,
    pub accuracy: f64,
    /// Mean detection delay over true positives, hours; absent when nothing
    /// was detected in time.
    pub mean_detection_delay_hours: Option<f64>,
    pub true_positives: usize,
    pub true_negatives: usize,
    pub false_positives: usize,
    pub false_negatives: usize,
    pub rows: Vec<ScenarioOutcome>,
}

/// Detection delay `T_hat - T_star`, hours. The caller must have filtered
/// pre-onset alarms into the false-positive bucket first.
pub fn detection_delay(t_hat_hours: f64, t_star_hours: f64) -> Result<f64> {
    if t_hat_hours < t_star_hours {
        return Err(Error::Data(format!(
            "detection delay undefined: alarm at {t_hat_hours} h precedes onset {t_star_hours} h"
        )));
    }
    Ok(t_hat_hours - t_star_hours)
}

/// Classifies one scenario's detection result against ground truth.
///
/// A leak scenario is correct iff an alarm exists at or after the onset; an
/// alarm strictly before the onset is a false positive even though a leak
/// exists later. A no-leak scenario is correct iff no alarm fires.
pub fn outcome_for(scenario: &Scenario, result: &DetectionResult) -> ScenarioOutcome {
    let onset_hours = scenario.leak.as_ref().map(|l| l.onset_hours);
    let alarm_hours = result.first_alarm_hours;
    let (correct, dd) = match (scenario.label, result.first_alarm_sample) {
        (false, None) => (true, None),
        (false, Some(_)) => (false, None),
        (true, None) => (false, None),
        (true, Some(alarm_n)) => {
            let leak = scenario.leak.as_ref().expect("labeled scenario carries a leak record");
            if alarm_n >= leak.onset_sample {
                let dd = detection_delay(alarm_hours.expect("alarm in hours"), leak.onset_hours)
                    .expect("post-onset alarm");
                (true, Some(dd))
            } else {
                (false, None)
            }
        }
    };
    ScenarioOutcome {
        id: scenario.id.clone(),
        label: scenario.label as u8,
        decision: result.decision as u8,
        onset_hours,
        alarm_hours,
        detection_delay_hours: dd,
        correct: correct as u8,
    }
}

/// Scenario-level accuracy `(TP + TN) / total` over pre-classified rows.
pub fn accuracy(rows: &[ScenarioOutcome]) -> Result<f64> {
    if rows.is_empty() {
        return Err(Error::Data("accuracy over an empty result set".into()));
    }
    Ok(rows.iter().filter(|r| r.correct == 1).count() as f64 / rows.len() as f64)
}

/// Builds a report from per-scenario rows; rows are sorted by scenario id so
/// reports are order-stable.
pub fn assemble_report(condition: &str, mut rows: Vec<ScenarioOutcome>) -> Result<EvalReport> {
    rows.sort_by(|a, b| a.id.cmp(&b.id));
    let acc = accuracy(&rows)?;
    let dds: Vec<f64> = rows.iter().filter_map(|r| r.detection_delay_hours).collect();
    let mean_dd = if dds.is_empty() { None } else { Some(dds.iter().sum::<f64>() / dds.len() as f64) };
    let mut tp = 0;
    let mut tn = 0;
    let mut fp = 0;
    let mut fnn = 0;
    for r in &rows {
        match (r.label == 1, r.correct == 1) {
            (true, true) => tp += 1,
            (false, true) => tn += 1,
            (true, false) => fnn += 1,
            (false, false) => fp += 1,
        }
    }
    Ok(EvalReport {
        condition: condition.to_string(),
        accuracy: acc,
        mean_detection_delay_hours: mean_dd,
        true_positives: tp,
        true_negatives: tn,
        false_positives: fp,
        false_negatives: fnn,
        rows,
    })
}

/// Runs the pipeline over a scenario list and aggregates a report.
pub fn evaluate(
    scenarios: &[&Scenario],
    bundle: &ModelBundle,
    gamma: f64,
    cfg: &DetectorConfig,
    condition: &str,
) -> Result<EvalReport> {
    let mut rows = Vec::with_capacity(scenarios.len());
    for s in scenarios {
        let result = run_pipeline(s, bundle, gamma, cfg)?;
        rows.push(outcome_for(s, &result));
    }
    assemble_report(condition, rows)
}

/// Noise-robustness sweep: noise is injected at test time only, per SNR
/// level, and the clean-trained pipeline is re-evaluated. The infinite-SNR
/// sentinel reproduces the clean run exactly.
pub fn noise_sweep(
    scenarios: &[&Scenario],
    bundle: &ModelBundle,
    gamma: f64,
    cfg: &DetectorConfig,
    snrs_db: &[f64],
    noise_seed: u64,
    reference: SnrReference,
) -> Result<Vec<EvalReport>> {
    if snrs_db.is_empty() {
        return Err(Error::Config("noise sweep needs at least one SNR level".into()));
    }
    let mut reports = Vec::with_capacity(snrs_db.len());
    for &snr in snrs_db {
        let mut rows = Vec::with_capacity(scenarios.len());
        for s in scenarios {
            let noisy = Scenario {
                pressures: add_noise(
                    &s.pressures,
                    snr,
                    derive_seed(noise_seed ^ s.seed, snr.to_bits()),
                    reference,
                ),
                ..(*s).clone()
            };
            let result = run_pipeline(&noisy, bundle, gamma, cfg)?;
            rows.push(outcome_for(&noisy, &result));
        }
        let tag = if snr.is_infinite() { "clean".to_string() } else { format!("snr{snr:.0}") };
        reports.push(assemble_report(&tag, rows)?);
    }
    Ok(reports)
}

/// Evaluates a foreign network's scenarios against a model trained on
/// another network; scenarios with fewer nodes are adapted inside the
/// pipeline by cyclic node replication.
pub fn cross_network_eval(
    foreign: &[&Scenario],
    bundle: &ModelBundle,
    gamma: f64,
    cfg: &DetectorConfig,
    network_tag: &str,
) -> Result<EvalReport> {
    if let Some(s) = foreign.iter().find(|s| s.node_count() > bundle.nodes()) {
        return Err(Error::Shape(format!(
            "foreign scenario {} has {} nodes, more than the model's {}",
            s.id,
            s.node_count(),
            bundle.nodes()
        )));
    }
    evaluate(foreign, bundle, gamma, cfg, network_tag)
}

/// Writes per-scenario rows as CSV.
pub fn write_report_csv(report: &EvalReport, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record([
        "scenario",
        "label",
        "decision",
        "onset_hours",
        "alarm_hours",
        "detection_delay_hours",
        "correct",
    ])?;
    let fmt_opt = |v: Option<f64>| v.map(|x| format!("{x}")).unwrap_or_default();
    for r in &report.rows {
        w.write_record([
            r.id.clone(),
            r.label.to_string(),
            r.decision.to_string(),
            fmt_opt(r.onset_hours),
            fmt_opt(r.alarm_hours),
            fmt_opt(r.detection_delay_hours),
            r.correct.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Plain-text summary table for one or more conditions, in the layout of the
/// published result tables (accuracy column, detection delay in hours).
pub fn format_table(title: &str, reports: &[&EvalReport]) -> String {
    let mut out = String::new();
    out.push_str(title);
    out.push('\n');
    out.push_str("Condition | Accuracy | Detection Delay (hours)\n");
    for r in reports {
        let dd = r
            .mean_detection_delay_hours
            .map(|v| format!("{v:.2}"))
            .unwrap_or_else(|| "-".to_string());
        out.push_str(&format!("{} | {:.2} | {}\n", r.condition, r.accuracy, dd));
    }
    out
}

/// Writes a score trace as CSV for plotting.
pub fn write_trace_csv(trace: &crate::detector::ScoreTrace, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["sample", "raw_score", "smoothed_score"])?;
    for (i, (r, s)) in trace.raw.iter().zip(&trace.smoothed).enumerate() {
        w.write_record([(trace.start_sample + i).to_string(), format!("{r}"), format!("{s}")])?;
    }
    w.flush()?;
    Ok(())
}
