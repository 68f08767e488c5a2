//! Leak detection for water distribution networks from node pressure series.
//!
//! The pipeline monitors the pressure head measured at every node of a
//! network. A circular buffer assembles the most recent `L` samples from all
//! `K` sensors into a window matrix, a convolutional autoencoder trained only
//! on no-leak data compresses each window into an embedding, and a one-class
//! SVM scores the embedding. Smoothed scores above a threshold calibrated to
//! a target false-positive rate raise the leak alarm and date the leak onset.
//!
//! Because real hydraulic simulation data is not shipped with this crate,
//! [`scenario`] provides a seeded statistical surrogate generator that keeps
//! the signal properties the detector relies on: daily and weekly demand
//! periodicity, a persistent pressure drop at leak onset that attenuates with
//! hop distance from the leak node, and optional test-time Gaussian noise at
//! a chosen SNR.
//!
//! Start with the runnable programs under `examples/`; each one covers a
//! single capability end to end (dataset generation, training, threshold
//! calibration, detection, evaluation, the noise sweep, and cross-network
//! transfer). The `leakdet` binary exposes the same steps as subcommands
//! driven by a TOML config.

pub mod autoencoder;
pub mod commands;
pub mod config;
pub mod detector;
pub mod error;
pub mod evaluation;
pub mod mat;
pub mod model_file;
pub mod nn;
pub mod ocsvm;
pub mod presets;
pub mod scenario;
pub mod window;

pub use error::{Error, Result};
