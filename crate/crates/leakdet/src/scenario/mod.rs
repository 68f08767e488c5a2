//! Synthetic pressure scenarios over a network topology.
//!
//! This module is a desk-scale surrogate for hydraulic simulation: it
//! produces seeded, reproducible pressure series with daily (48-sample) and
//! weekly (336-sample) demand periodicity, a shared smooth stochastic demand
//! term, per-scenario pipe-parameter jitter, leak injection as a persistent
//! pressure drop attenuated with hop distance, and test-time Gaussian noise
//! at a chosen SNR.

mod generate;
mod io;
mod network;

pub use generate::{
    add_noise, generate_baseline, generate_dataset, inject_leak, GenerationConfig, LeakFractions,
    SignalParams, SnrReference, SAMPLES_PER_DAY, SAMPLES_PER_WEEK,
};
pub use io::{read_scenario, write_scenario, Manifest, ScenarioMeta};
pub use network::{load_topology, Network, NodeSpec, Pipe, PipeSpec, TopologyFile};

use serde::{Deserialize, Serialize};

use crate::mat::Matrix;
use crate::{Error, Result};

/// Dataset split a scenario belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Validation,
    Test,
}

impl Split {
    pub fn as_str(&self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Validation => "validation",
            Split::Test => "test",
        }
    }
}

/// Ground-truth description of an injected leak.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LeakSpec {
    /// Index of the leaking node.
    pub node_index: usize,
    /// Drop size as a fraction in (0, 1] of the node's baseline amplitude.
    pub magnitude: f64,
    /// Sample index at which the leak starts.
    pub onset_sample: usize,
    /// Onset in hours: `onset_sample * sample_period`.
    pub onset_hours: f64,
}

impl LeakSpec {
    pub fn new(node_index: usize, magnitude: f64, onset_sample: usize, sample_period_hours: f64) -> Result<Self> {
        if !(magnitude > 0.0 && magnitude <= 1.0) {
            return Err(Error::Config(format!("leak magnitude {magnitude} not in (0, 1]")));
        }
        Ok(LeakSpec {
            node_index,
            magnitude,
            onset_sample,
            onset_hours: onset_sample as f64 * sample_period_hours,
        })
    }
}

/// One simulated scenario: a K x N pressure matrix plus ground truth.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub id: String,
    pub split: Split,
    /// Row `k` is the pressure series of node `k`, in meters of head.
    pub pressures: Matrix,
    pub sample_period_hours: f64,
    /// True label: 1 iff a leak is present.
    pub label: bool,
    pub leak: Option<LeakSpec>,
    pub seed: u64,
}

impl Scenario {
    pub fn node_count(&self) -> usize {
        self.pressures.rows()
    }

    pub fn sample_count(&self) -> usize {
        self.pressures.cols()
    }

    fn check(&self) -> Result<()> {
        if self.label != self.leak.is_some() {
            return Err(Error::Data(format!("scenario {}: label and leak record disagree", self.id)));
        }
        if !self.pressures.is_finite() {
            return Err(Error::Data(format!("scenario {}: non-finite pressure values", self.id)));
        }
        Ok(())
    }
}

/// A generated dataset with train/validation/test splits.
///
/// Construction enforces that the train split holds no-leak scenarios only;
/// the detector is trained exclusively on normal data.
#[derive(Debug, Clone)]
pub struct ScenarioSet {
    scenarios: Vec<Scenario>,
}

impl ScenarioSet {
    pub fn new(scenarios: Vec<Scenario>) -> Result<Self> {
        for s in &scenarios {
            s.check()?;
            if s.split == Split::Train && s.label {
                return Err(Error::Data(format!(
                    "scenario {} is leak-labeled but assigned to the train split",
                    s.id
                )));
            }
        }
        Ok(ScenarioSet { scenarios })
    }

    pub fn all(&self) -> &[Scenario] {
        &self.scenarios
    }

    pub fn split(&self, split: Split) -> Vec<&Scenario> {
        self.scenarios.iter().filter(|s| s.split == split).collect()
    }

    pub fn len(&self) -> usize {
        self.scenarios.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scenarios.is_empty()
    }
}

/// Splits a 64-bit seed into an unrelated stream for a tagged sub-task.
/// SplitMix64 finalizer; stable across platforms and releases.
pub(crate) fn derive_seed(base: u64, tag: u64) -> u64 {
    let mut z = base ^ tag.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}
