//! Scenario persistence: one CSV per scenario plus a JSON sidecar, and a
//! dataset manifest listing the splits.
//!
//! CSV layout: header row `timestamp,<node ids...>`, one row per sample with
//! an ISO-8601 timestamp in the first column. Floats are written in shortest
//! round-trip form, so write-read-write is byte-stable.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use chrono::{DateTime, Duration, Utc};
use serde::{Deserialize, Serialize};

use super::{LeakSpec, Scenario, Split};
use crate::mat::Matrix;
use crate::{Error, Result};

/// Simulated clock start for the timestamp column; a Monday, so weekly
/// periodicity aligns with calendar weeks.
const SIM_EPOCH: &str = "2025-01-06T00:00:00Z";

/// Sidecar JSON next to each scenario CSV.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScenarioMeta {
    pub schema_version: u32,
    pub id: String,
    pub split: Split,
    pub label: u8,
    pub sample_period_hours: f64,
    pub seed: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub leak: Option<LeakSpec>,
}

/// Dataset manifest: split membership plus the shared node ordering.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub schema_version: u32,
    pub node_ids: Vec<String>,
    pub sample_period_hours: f64,
    pub master_seed: u64,
    /// Split name -> ordered scenario ids.
    pub splits: BTreeMap<String, Vec<String>>,
}

impl Manifest {
    pub fn load(path: &Path) -> Result<Manifest> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Data(format!("cannot read manifest {}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| Error::Data(format!("manifest parse error: {e}")))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self).expect("manifest serialization"))?;
        Ok(())
    }

    pub fn split_ids(&self, split: Split) -> &[String] {
        self.splits.get(split.as_str()).map(|v| v.as_slice()).unwrap_or(&[])
    }
}

fn sim_epoch() -> DateTime<Utc> {
    SIM_EPOCH.parse().expect("valid epoch constant")
}

fn csv_path(dir: &Path, id: &str) -> PathBuf {
    dir.join(format!("{id}.csv"))
}

fn meta_path(dir: &Path, id: &str) -> PathBuf {
    dir.join(format!("{id}.json"))
}

/// Writes `<id>.csv` and `<id>.json` into `dir`.
pub fn write_scenario(dir: &Path, scenario: &Scenario, node_ids: &[String]) -> Result<()> {
    if node_ids.len() != scenario.node_count() {
        return Err(Error::Shape(format!(
            "scenario {} has {} rows but {} node ids were given",
            scenario.id,
            scenario.node_count(),
            node_ids.len()
        )));
    }
    std::fs::create_dir_all(dir)?;
    let mut writer = csv::Writer::from_path(csv_path(dir, &scenario.id))?;
    let mut header = vec!["timestamp".to_string()];
    header.extend_from_slice(node_ids);
    writer.write_record(&header)?;

    let period = Duration::seconds((scenario.sample_period_hours * 3600.0).round() as i64);
    let epoch = sim_epoch();
    let mut record = Vec::with_capacity(node_ids.len() + 1);
    for n in 0..scenario.sample_count() {
        record.clear();
        let ts = epoch + period * n as i32;
        record.push(ts.to_rfc3339_opts(chrono::SecondsFormat::Secs, true));
        for k in 0..scenario.node_count() {
            record.push(format!("{}", scenario.pressures.get(k, n)));
        }
        writer.write_record(&record)?;
    }
    writer.flush()?;

    let meta = ScenarioMeta {
        schema_version: 1,
        id: scenario.id.clone(),
        split: scenario.split,
        label: scenario.label as u8,
        sample_period_hours: scenario.sample_period_hours,
        seed: scenario.seed,
        leak: scenario.leak.clone(),
    };
    std::fs::write(
        meta_path(dir, &scenario.id),
        serde_json::to_string_pretty(&meta).expect("meta serialization"),
    )?;
    Ok(())
}

/// Reads a scenario back from its CSV and sidecar.
pub fn read_scenario(dir: &Path, id: &str) -> Result<Scenario> {
    let meta_text = std::fs::read_to_string(meta_path(dir, id))
        .map_err(|e| Error::Data(format!("cannot read sidecar for {id}: {e}")))?;
    let meta: ScenarioMeta =
        serde_json::from_str(&meta_text).map_err(|e| Error::Data(format!("sidecar parse error for {id}: {e}")))?;

    let mut reader = csv::Reader::from_path(csv_path(dir, id))
        .map_err(|e| Error::Data(format!("cannot read csv for {id}: {e}")))?;
    let node_count = reader.headers().map_err(|e| Error::Data(e.to_string()))?.len().saturating_sub(1);
    if node_count == 0 {
        return Err(Error::Data(format!("scenario {id}: csv has no node columns")));
    }
    let mut columns: Vec<Vec<f64>> = Vec::new();
    for row in reader.records() {
        let row = row.map_err(|e| Error::Data(format!("scenario {id}: {e}")))?;
        if row.len() != node_count + 1 {
            return Err(Error::Data(format!("scenario {id}: ragged csv row")));
        }
        let mut sample = Vec::with_capacity(node_count);
        for field in row.iter().skip(1) {
            let v: f64 = field
                .parse()
                .map_err(|e| Error::Data(format!("scenario {id}: bad float {field:?}: {e}")))?;
            sample.push(v);
        }
        columns.push(sample);
    }
    let samples = columns.len();
    let mut pressures = Matrix::zeros(node_count, samples);
    for (n, sample) in columns.iter().enumerate() {
        for (k, v) in sample.iter().enumerate() {
            pressures.set(k, n, *v);
        }
    }
    let scenario = Scenario {
        id: meta.id,
        split: meta.split,
        pressures,
        sample_period_hours: meta.sample_period_hours,
        label: meta.label != 0,
        leak: meta.leak,
        seed: meta.seed,
    };
    if scenario.label != scenario.leak.is_some() {
        return Err(Error::Data(format!("scenario {id}: label and leak record disagree")));
    }
    Ok(scenario)
}
