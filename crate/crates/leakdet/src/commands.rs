//! Library-level implementations of the CLI subcommands. Each command reads
//! its inputs from disk, writes its artifacts plus a resolved-config snapshot
//! into the output directory, and is idempotent for fixed inputs and seeds.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::autoencoder::{train, TrainedAutoencoder};
use crate::config::RunConfig;
use crate::detector::{calibrate_threshold, run_pipeline, score_trace};
use crate::evaluation::{
    assemble_report, cross_network_eval, format_table, noise_sweep, outcome_for, write_report_csv,
    write_trace_csv, EvalReport,
};
use crate::model_file::{load_bundle, model_hash, save_bundle, ModelBundle};
use crate::ocsvm;
use crate::scenario::{
    generate_dataset, load_topology, read_scenario, Manifest, Scenario, Split,
};
use crate::window::fit_stats;
use crate::{Error, Result};

fn write_snapshot(cfg: &RunConfig, out_dir: &Path, command: &str) -> Result<()> {
    std::fs::create_dir_all(out_dir)?;
    std::fs::write(out_dir.join(format!("config.{command}.toml")), cfg.snapshot_toml())?;
    Ok(())
}

/// Loads every scenario of a split listed in the manifest.
pub fn load_split(data_dir: &Path, manifest: &Manifest, split: Split) -> Result<Vec<Scenario>> {
    manifest
        .split_ids(split)
        .iter()
        .map(|id| read_scenario(data_dir, id))
        .collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct GenerateSummary {
    pub scenario_count: usize,
    pub data_dir: PathBuf,
    pub manifest_path: PathBuf,
}

/// `generate`: writes one CSV + JSON sidecar per scenario and the manifest.
pub fn cmd_generate(cfg: &RunConfig, out_dir: &Path) -> Result<GenerateSummary> {
    write_snapshot(cfg, out_dir, "generate")?;
    let network = load_topology(&cfg.topology_path())?;
    let set = generate_dataset(&network, &cfg.generation_config())?;

    let data_dir = out_dir.join("data");
    std::fs::create_dir_all(&data_dir)?;
    let node_ids = network.node_ids();
    let mut splits = std::collections::BTreeMap::new();
    for s in set.all() {
        crate::scenario::write_scenario(&data_dir, s, &node_ids)?;
        splits
            .entry(s.split.as_str().to_string())
            .or_insert_with(Vec::new)
            .push(s.id.clone());
    }
    let manifest = Manifest {
        schema_version: 1,
        node_ids,
        sample_period_hours: cfg.dataset.sample_period_hours,
        master_seed: cfg.dataset.master_seed,
        splits,
    };
    let manifest_path = data_dir.join("manifest.json");
    manifest.save(&manifest_path)?;
    Ok(GenerateSummary { scenario_count: set.len(), data_dir, manifest_path })
}

#[derive(Debug, Clone, Serialize)]
pub struct TrainSummary {
    pub model_path: PathBuf,
    pub model_hash: String,
    pub steps: usize,
    pub initial_val_loss: f64,
    pub final_val_loss: f64,
    pub ocsvm_training_embeddings: usize,
    pub support_vectors: usize,
}

/// Trains the autoencoder, then the one-class SVM on embeddings of the same
/// training windows, and writes the combined model file.
pub fn cmd_train(cfg: &RunConfig, data_dir: &Path, out_dir: &Path) -> Result<TrainSummary> {
    write_snapshot(cfg, out_dir, "train")?;
    let manifest = Manifest::load(&data_dir.join("manifest.json"))?;
    let train_scenarios = load_split(data_dir, &manifest, Split::Train)?;
    if train_scenarios.is_empty() {
        return Err(Error::Data("train split is empty".into()));
    }
    if let Some(bad) = train_scenarios.iter().find(|s| s.label) {
        return Err(Error::Data(format!(
            "refusing to train: scenario {} in the train split is leak-labeled",
            bad.id
        )));
    }
    let validation: Vec<Scenario> = load_split(data_dir, &manifest, Split::Validation)?
        .into_iter()
        .filter(|s| !s.label)
        .collect();

    let train_refs: Vec<&Scenario> = train_scenarios.iter().collect();
    let val_refs: Vec<&Scenario> = validation.iter().collect();
    let stats = fit_stats(&train_refs)?;
    let outcome = train(&train_refs, &val_refs, &stats, cfg.window.length, &cfg.train_config())?;
    let embeddings = training_embeddings(&train_refs, &stats, &outcome, cfg)?;
    let kept = thin_embeddings(embeddings, cfg.ocsvm.max_train_embeddings);
    let kept_count = kept.len();
    let svm = ocsvm::fit(&kept, &cfg.fit_options())?;
    let support_vectors = svm.support_vectors.len();

    let bundle = ModelBundle { encoder: outcome.encoder.clone(), decoder: outcome.decoder.clone(), ocsvm: svm, norm: stats };
    let model_path = out_dir.join("model.bin");
    save_bundle(&model_path, &bundle)?;
    write_loss_history(&outcome, &out_dir.join("loss_history.csv"))?;

    Ok(TrainSummary {
        model_hash: model_hash(&model_path)?,
        model_path,
        steps: outcome.steps,
        initial_val_loss: outcome.initial_val_loss,
        final_val_loss: outcome.final_val_loss,
        ocsvm_training_embeddings: kept_count,
        support_vectors,
    })
}

/// Embeddings of the autoencoder's own training windows (same window ends,
/// same normalization), computed with the trained encoder.
fn training_embeddings(
    train_refs: &[&Scenario],
    stats: &crate::window::NormStats,
    outcome: &TrainedAutoencoder,
    cfg: &RunConfig,
) -> Result<Vec<Vec<f64>>> {
    let l = cfg.window.length;
    let stride = cfg.window.train_stride;
    let mut out = Vec::new();
    for s in train_refs {
        let normalized = crate::window::normalize_series(&s.pressures, stats)?;
        let all = outcome.encoder.scan_embeddings(&normalized)?;
        for e in all {
            if (e.end_sample + 1 - l) % stride == 0 {
                out.push(e.values);
            }
        }
    }
    Ok(out)
}

/// Deterministic thinning to at most `cap` embeddings, evenly spaced over the
/// collection order.
fn thin_embeddings(embeddings: Vec<Vec<f64>>, cap: usize) -> Vec<Vec<f64>> {
    let n = embeddings.len();
    if cap == 0 || n <= cap {
        return embeddings;
    }
    let mut kept = Vec::with_capacity(cap);
    for (i, e) in embeddings.into_iter().enumerate() {
        if i * cap / n != (i + 1) * cap / n {
            kept.push(e);
        }
    }
    kept
}

fn write_loss_history(outcome: &TrainedAutoencoder, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["step", "train_loss", "val_loss"])?;
    for rec in &outcome.history {
        w.write_record([
            rec.step.to_string(),
            if rec.train_loss.is_nan() { String::new() } else { format!("{}", rec.train_loss) },
            rec.val_loss.map(|v| format!("{v}")).unwrap_or_default(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// On-disk threshold record.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ThresholdRecord {
    pub gamma: f64,
    pub target_fpr: f64,
    pub fpr_mode: crate::detector::FprMode,
    pub validation_scenarios: usize,
    pub pooled_samples: usize,
    pub model_hash: String,
}

impl ThresholdRecord {
    pub fn load(path: &Path) -> Result<ThresholdRecord> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Data(format!("cannot read threshold record {}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| Error::Data(format!("threshold record parse error: {e}")))
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct CalibrateSummary {
    pub gamma: f64,
    pub record_path: PathBuf,
    pub curve_path: PathBuf,
}

/// Calibrates the threshold on the no-leak validation split and writes the
/// full FPR-vs-threshold curve for inspection.
pub fn cmd_calibrate(cfg: &RunConfig, data_dir: &Path, model_path: &Path, out_dir: &Path) -> Result<CalibrateSummary> {
    write_snapshot(cfg, out_dir, "calibrate")?;
    let bundle = load_bundle(model_path)?;
    let manifest = Manifest::load(&data_dir.join("manifest.json"))?;
    let validation: Vec<Scenario> = load_split(data_dir, &manifest, Split::Validation)?
        .into_iter()
        .filter(|s| !s.label)
        .collect();
    if validation.is_empty() {
        return Err(Error::Data("validation split has no no-leak scenarios to calibrate on".into()));
    }
    let det_cfg = cfg.detector_config();
    let mut traces = Vec::with_capacity(validation.len());
    for s in &validation {
        traces.push(score_trace(s, &bundle, &det_cfg)?.smoothed);
    }
    let gamma = calibrate_threshold(&traces, det_cfg.target_fpr, det_cfg.fpr_mode)?;

    // FPR-vs-threshold curve on a 1% grid; the quantile is non-increasing in
    // the FPR by construction.
    let curve_path = out_dir.join("threshold_curve.csv");
    {
        let mut w = csv::Writer::from_path(&curve_path)?;
        w.write_record(["fpr", "gamma"])?;
        for i in 1..=50 {
            let fpr = i as f64 / 100.0;
            let g = calibrate_threshold(&traces, fpr, det_cfg.fpr_mode)?;
            w.write_record([format!("{fpr}"), format!("{g}")])?;
        }
        w.flush()?;
    }

    let pooled_samples = traces.iter().map(|t| t.len()).sum();
    let record = ThresholdRecord {
        gamma,
        target_fpr: det_cfg.target_fpr,
        fpr_mode: det_cfg.fpr_mode,
        validation_scenarios: validation.len(),
        pooled_samples,
        model_hash: model_hash(model_path)?,
    };
    let record_path = out_dir.join("threshold.json");
    std::fs::write(&record_path, serde_json::to_string_pretty(&record).expect("record serialization"))?;
    Ok(CalibrateSummary { gamma, record_path, curve_path })
}

/// Per-scenario detection record emitted next to the evaluation reports.
#[derive(Debug, Clone, Serialize)]
struct DetectionRecord<'a> {
    scenario: &'a str,
    decision: u8,
    first_alarm_sample: Option<usize>,
    first_alarm_hours: Option<f64>,
    gamma: f64,
    smoothing: usize,
    model_hash: &'a str,
}

#[derive(Debug, Clone, Serialize)]
pub struct EvalSummary {
    pub accuracy: f64,
    pub mean_detection_delay_hours: Option<f64>,
    pub report_dir: PathBuf,
}

fn check_geometry(cfg: &RunConfig, bundle: &ModelBundle, manifest: &Manifest) -> Result<()> {
    if manifest.node_ids.len() > bundle.nodes() {
        return Err(Error::Shape(format!(
            "dataset has {} nodes but the model was trained for {}",
            manifest.node_ids.len(),
            bundle.nodes()
        )));
    }
    bundle.require_dims(bundle.nodes(), cfg.window.length)
}

/// Evaluates the test split and writes reports, traces and detection records.
pub fn cmd_evaluate(
    cfg: &RunConfig,
    data_dir: &Path,
    model_path: &Path,
    threshold_path: &Path,
    out_dir: &Path,
) -> Result<EvalSummary> {
    write_snapshot(cfg, out_dir, "evaluate")?;
    let bundle = load_bundle(model_path)?;
    let record = ThresholdRecord::load(threshold_path)?;
    let manifest = Manifest::load(&data_dir.join("manifest.json"))?;
    check_geometry(cfg, &bundle, &manifest)?;
    let test = load_split(data_dir, &manifest, Split::Test)?;
    if test.is_empty() {
        return Err(Error::Data("test split is empty".into()));
    }
    let det_cfg = cfg.detector_config();
    let hash = model_hash(model_path)?;

    let eval_dir = out_dir.join("eval");
    let trace_dir = eval_dir.join("traces");
    let det_dir = eval_dir.join("detections");
    std::fs::create_dir_all(&trace_dir)?;
    std::fs::create_dir_all(&det_dir)?;

    let mut rows = Vec::with_capacity(test.len());
    for s in &test {
        let result = run_pipeline(s, &bundle, record.gamma, &det_cfg)?;
        write_trace_csv(&result.trace, &trace_dir.join(format!("{}.csv", s.id)))?;
        let rec = DetectionRecord {
            scenario: &s.id,
            decision: result.decision as u8,
            first_alarm_sample: result.first_alarm_sample,
            first_alarm_hours: result.first_alarm_hours,
            gamma: record.gamma,
            smoothing: det_cfg.smoothing,
            model_hash: &hash,
        };
        std::fs::write(
            det_dir.join(format!("{}.json", s.id)),
            serde_json::to_string_pretty(&rec).expect("record serialization"),
        )?;
        rows.push(outcome_for(s, &result));
    }
    let report = assemble_report("clean", rows)?;
    write_report_csv(&report, &eval_dir.join("report.csv"))?;
    std::fs::write(eval_dir.join("report.json"), serde_json::to_string_pretty(&report).expect("report"))?;
    std::fs::write(eval_dir.join("summary.txt"), format_table("Detection Accuracy and Delay", &[&report]))?;
    Ok(EvalSummary {
        accuracy: report.accuracy,
        mean_detection_delay_hours: report.mean_detection_delay_hours,
        report_dir: eval_dir,
    })
}

/// Noise sweep over the configured (or overridden) SNR levels.
pub fn cmd_noise_sweep(
    cfg: &RunConfig,
    data_dir: &Path,
    model_path: &Path,
    threshold_path: &Path,
    out_dir: &Path,
    snr_override: Option<Vec<f64>>,
) -> Result<Vec<EvalReport>> {
    write_snapshot(cfg, out_dir, "noise-sweep")?;
    let bundle = load_bundle(model_path)?;
    let record = ThresholdRecord::load(threshold_path)?;
    let manifest = Manifest::load(&data_dir.join("manifest.json"))?;
    check_geometry(cfg, &bundle, &manifest)?;
    let test = load_split(data_dir, &manifest, Split::Test)?;
    let refs: Vec<&Scenario> = test.iter().collect();
    let snrs = snr_override.unwrap_or_else(|| cfg.noise.snr_db.clone());
    let noise_seed = crate::scenario::derive_seed(cfg.dataset.master_seed, 0x4015E);
    let reports = noise_sweep(
        &refs,
        &bundle,
        record.gamma,
        &cfg.detector_config(),
        &snrs,
        noise_seed,
        cfg.noise.reference,
    )?;

    let noise_dir = out_dir.join("noise");
    std::fs::create_dir_all(&noise_dir)?;
    {
        let mut w = csv::Writer::from_path(noise_dir.join("noise_report.csv"))?;
        w.write_record(["snr_db", "accuracy", "mean_detection_delay_hours"])?;
        for (snr, rep) in snrs.iter().zip(&reports) {
            w.write_record([
                format!("{snr}"),
                format!("{}", rep.accuracy),
                rep.mean_detection_delay_hours.map(|v| format!("{v}")).unwrap_or_default(),
            ])?;
        }
        w.flush()?;
    }
    for rep in &reports {
        write_report_csv(rep, &noise_dir.join(format!("report_{}.csv", rep.condition)))?;
    }
    let refs_for_table: Vec<&EvalReport> = reports.iter().collect();
    std::fs::write(
        noise_dir.join("summary.txt"),
        format_table("Detection Accuracy and Delay for different SNR levels", &refs_for_table),
    )?;
    Ok(reports)
}

/// Cross-network run: generates scenarios for the foreign topology named in
/// the config and evaluates them against the trained model via node
/// replication.
pub fn cmd_cross_network(
    cfg: &RunConfig,
    model_path: &Path,
    threshold_path: &Path,
    out_dir: &Path,
) -> Result<EvalReport> {
    write_snapshot(cfg, out_dir, "cross-network")?;
    let cross = cfg
        .cross_network
        .as_ref()
        .ok_or_else(|| Error::Config("config has no [cross_network] section".into()))?;
    let bundle = load_bundle(model_path)?;
    let record = ThresholdRecord::load(threshold_path)?;
    let foreign_net = load_topology(&cfg.cross_topology_path().expect("checked above"))?;
    if foreign_net.node_count() > bundle.nodes() {
        return Err(Error::Shape(format!(
            "foreign network has {} nodes, more than the model's {}",
            foreign_net.node_count(),
            bundle.nodes()
        )));
    }
    let mut gen_cfg = cfg.generation_config();
    gen_cfg.train_count = 0;
    gen_cfg.validation_count = 0;
    gen_cfg.test_count = cross.scenario_count;
    gen_cfg.leak_fraction.test = cross.leak_fraction;
    gen_cfg.master_seed = cross.master_seed;
    let foreign = generate_dataset(&foreign_net, &gen_cfg)?;
    let refs: Vec<&Scenario> = foreign.split(Split::Test);

    let tag = cross
        .topology_path
        .file_stem()
        .map(|s| s.to_string_lossy().to_string())
        .unwrap_or_else(|| "foreign".to_string());
    let report = cross_network_eval(&refs, &bundle, record.gamma, &cfg.detector_config(), &tag)?;

    let cross_dir = out_dir.join("cross");
    std::fs::create_dir_all(&cross_dir)?;
    write_report_csv(&report, &cross_dir.join(format!("report_{tag}.csv")))?;
    std::fs::write(
        cross_dir.join("summary.txt"),
        format_table(&format!("Detection Accuracy and Delay for {tag}"), &[&report]),
    )?;
    Ok(report)
}
