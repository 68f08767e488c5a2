//! The TOML run configuration shared by the CLI and the library commands.
//!
//! Every stochastic step derives its seed from `dataset.master_seed`, and
//! each command echoes the resolved configuration into its output directory,
//! so a run is reproducible from the config file alone.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::autoencoder::TrainConfig;
use crate::detector::{DetectorConfig, FprMode};
use crate::ocsvm::{FitOptions, GammaPolicy};
use crate::scenario::{GenerationConfig, LeakFractions, SignalParams, SnrReference};
use crate::{Error, Result};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TopologySection {
    /// Topology JSON, resolved relative to the config file's directory.
    pub path: PathBuf,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct DatasetSection {
    pub train_count: usize,
    pub validation_count: usize,
    pub test_count: usize,
    pub validation_leak_fraction: f64,
    pub test_leak_fraction: f64,
    pub train_duration_samples: usize,
    pub eval_duration_samples: usize,
    pub sample_period_hours: f64,
    pub leak_magnitude_min: f64,
    pub leak_magnitude_max: f64,
    pub leak_onset_min: usize,
    pub leak_onset_max: usize,
    pub pipe_jitter_rel: f64,
    pub attenuation_tau: f64,
    pub master_seed: u64,
}

impl Default for DatasetSection {
    fn default() -> Self {
        let d = GenerationConfig::default();
        DatasetSection {
            train_count: d.train_count,
            validation_count: d.validation_count,
            test_count: d.test_count,
            validation_leak_fraction: d.leak_fraction.validation,
            test_leak_fraction: d.leak_fraction.test,
            train_duration_samples: d.train_duration_samples,
            eval_duration_samples: d.eval_duration_samples,
            sample_period_hours: d.sample_period_hours,
            leak_magnitude_min: d.leak_magnitude_min,
            leak_magnitude_max: d.leak_magnitude_max,
            leak_onset_min: d.leak_onset_min,
            leak_onset_max: d.leak_onset_max,
            pipe_jitter_rel: d.pipe_jitter_rel,
            attenuation_tau: d.attenuation_tau,
            master_seed: d.master_seed,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct WindowSection {
    /// Window length L in samples (336 covers one week at 30 minutes).
    pub length: usize,
    /// Stride between training windows, in samples.
    pub train_stride: usize,
    /// Ablation switch: disable per-node z-scoring.
    pub normalize: bool,
}

impl Default for WindowSection {
    fn default() -> Self {
        WindowSection { length: 336, train_stride: 24, normalize: true }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainingSection {
    pub batch_size: usize,
    pub learning_rate: f64,
    pub max_steps: usize,
    pub eval_every: usize,
    pub patience: usize,
}

impl Default for TrainingSection {
    fn default() -> Self {
        TrainingSection { batch_size: 32, learning_rate: 1e-3, max_steps: 400, eval_every: 20, patience: 10 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct OcSvmSection {
    pub nu: f64,
    pub gamma: GammaPolicy,
    /// Cap on the number of training embeddings fed to the dual solver;
    /// larger sets are thinned deterministically (evenly spaced).
    pub max_train_embeddings: usize,
}

impl Default for OcSvmSection {
    fn default() -> Self {
        OcSvmSection { nu: 0.1, gamma: GammaPolicy::Scale, max_train_embeddings: 600 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct DetectorSection {
    pub smoothing: usize,
    pub target_fpr: f64,
    pub fpr_mode: FprMode,
}

impl Default for DetectorSection {
    fn default() -> Self {
        DetectorSection { smoothing: 48, target_fpr: 0.10, fpr_mode: FprMode::PerScenarioMax }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct NoiseSection {
    /// Test-time SNR levels for the noise sweep, in dB.
    pub snr_db: Vec<f64>,
    pub reference: SnrReference,
}

impl Default for NoiseSection {
    fn default() -> Self {
        NoiseSection { snr_db: vec![45.0, 40.0, 35.0, 30.0, 25.0], reference: SnrReference::AcPower }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CrossNetworkSection {
    /// Foreign topology JSON, resolved like the main topology path.
    pub topology_path: PathBuf,
    #[serde(default = "default_cross_count")]
    pub scenario_count: usize,
    #[serde(default = "default_cross_leak_fraction")]
    pub leak_fraction: f64,
    #[serde(default = "default_cross_seed")]
    pub master_seed: u64,
}

fn default_cross_count() -> usize {
    20
}

fn default_cross_leak_fraction() -> f64 {
    0.5
}

fn default_cross_seed() -> u64 {
    9000
}

/// Full run configuration.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunConfig {
    pub topology: TopologySection,
    #[serde(default)]
    pub dataset: DatasetSection,
    #[serde(default)]
    pub signal: SignalParams,
    #[serde(default)]
    pub window: WindowSection,
    #[serde(default)]
    pub training: TrainingSection,
    #[serde(default)]
    pub ocsvm: OcSvmSection,
    #[serde(default)]
    pub detector: DetectorSection,
    #[serde(default)]
    pub noise: NoiseSection,
    #[serde(default)]
    pub cross_network: Option<CrossNetworkSection>,
    /// Directory the config was loaded from; relative paths resolve here.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<RunConfig> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
        let mut cfg: RunConfig =
            toml::from_str(&text).map_err(|e| Error::Config(format!("config parse error: {e}")))?;
        cfg.base_dir = path.parent().unwrap_or_else(|| Path::new(".")).to_path_buf();
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.generation_config().validate()?;
        if self.window.length % 4 != 0 || self.window.length < 14 {
            return Err(Error::Config(format!(
                "window length {} must be a multiple of 4 and at least 14",
                self.window.length
            )));
        }
        if self.window.train_stride == 0 {
            return Err(Error::Config("train stride must be positive".into()));
        }
        if self.detector.smoothing == 0 {
            return Err(Error::Config("smoothing length must be at least 1".into()));
        }
        if !(self.detector.target_fpr > 0.0 && self.detector.target_fpr < 1.0) {
            return Err(Error::Config(format!("target FPR {} not in (0, 1)", self.detector.target_fpr)));
        }
        if !(self.ocsvm.nu > 0.0 && self.ocsvm.nu <= 1.0) {
            return Err(Error::Config(format!("nu {} not in (0, 1]", self.ocsvm.nu)));
        }
        if let Some(cross) = &self.cross_network {
            if cross.scenario_count == 0 {
                return Err(Error::Config("cross-network scenario count must be positive".into()));
            }
        }
        Ok(())
    }

    pub fn topology_path(&self) -> PathBuf {
        self.base_dir.join(&self.topology.path)
    }

    pub fn cross_topology_path(&self) -> Option<PathBuf> {
        self.cross_network.as_ref().map(|c| self.base_dir.join(&c.topology_path))
    }

    pub fn generation_config(&self) -> GenerationConfig {
        let d = &self.dataset;
        GenerationConfig {
            train_count: d.train_count,
            validation_count: d.validation_count,
            test_count: d.test_count,
            leak_fraction: LeakFractions {
                train: 0.0,
                validation: d.validation_leak_fraction,
                test: d.test_leak_fraction,
            },
            train_duration_samples: d.train_duration_samples,
            eval_duration_samples: d.eval_duration_samples,
            sample_period_hours: d.sample_period_hours,
            window_len: self.window.length,
            leak_magnitude_min: d.leak_magnitude_min,
            leak_magnitude_max: d.leak_magnitude_max,
            leak_onset_min: d.leak_onset_min,
            leak_onset_max: d.leak_onset_max,
            pipe_jitter_rel: d.pipe_jitter_rel,
            attenuation_tau: d.attenuation_tau,
            signal: self.signal.clone(),
            master_seed: d.master_seed,
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            batch_size: self.training.batch_size,
            learning_rate: self.training.learning_rate,
            max_steps: self.training.max_steps,
            eval_every: self.training.eval_every,
            patience: self.training.patience,
            window_stride: self.window.train_stride,
            seed: crate::scenario::derive_seed(self.dataset.master_seed, 0x7241),
            ..TrainConfig::default()
        }
    }

    pub fn fit_options(&self) -> FitOptions {
        FitOptions {
            nu: self.ocsvm.nu,
            gamma: self.ocsvm.gamma,
            seed: crate::scenario::derive_seed(self.dataset.master_seed, 0x0C57),
            ..FitOptions::default()
        }
    }

    pub fn detector_config(&self) -> DetectorConfig {
        DetectorConfig {
            smoothing: self.detector.smoothing,
            target_fpr: self.detector.target_fpr,
            fpr_mode: self.detector.fpr_mode,
            sample_period_hours: self.dataset.sample_period_hours,
        }
    }

    /// Resolved-config snapshot written next to every command's outputs.
    pub fn snapshot_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serialization")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_parses_with_defaults() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.toml");
        std::fs::write(&path, "[topology]\npath = \"net.json\"\n").unwrap();
        let cfg = RunConfig::load(&path).unwrap();
        assert_eq!(cfg.window.length, 336);
        assert_eq!(cfg.detector.target_fpr, 0.10);
        assert_eq!(cfg.noise.snr_db, vec![45.0, 40.0, 35.0, 30.0, 25.0]);
        assert_eq!(cfg.topology_path(), dir.path().join("net.json"));
    }

    #[test]
    fn bad_fpr_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.toml");
        std::fs::write(&path, "[topology]\npath = \"net.json\"\n\n[detector]\ntarget_fpr = 1.5\n").unwrap();
        let err = RunConfig::load(&path).unwrap_err();
        assert!(matches!(err, Error::Config(_)));
    }

    #[test]
    fn snapshot_is_stable() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.toml");
        std::fs::write(&path, "[topology]\npath = \"net.json\"\n").unwrap();
        let cfg = RunConfig::load(&path).unwrap();
        assert_eq!(cfg.snapshot_toml(), cfg.snapshot_toml());
        // The snapshot itself parses back.
        let reparsed: RunConfig = toml::from_str(&cfg.snapshot_toml()).unwrap();
        assert_eq!(reparsed.window.length, cfg.window.length);
    }
}
