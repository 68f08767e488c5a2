//! Calibrate the detection threshold to a target false-positive rate on the
//! no-leak validation split, and inspect the FPR-vs-threshold curve.
//!
//! ```text
//! cargo run --example calibrate_threshold
//! ```

use leakdet::commands::{cmd_calibrate, cmd_generate, cmd_train};
use leakdet::config::RunConfig;
use leakdet::presets;

fn main() -> leakdet::Result<()> {
    let dir = tempfile::tempdir()?;
    let config_path = presets::write_tiny_workspace(dir.path(), 13)?;
    let cfg = RunConfig::load(&config_path)?;

    cmd_generate(&cfg, dir.path())?;
    let trained = cmd_train(&cfg, &dir.path().join("data"), dir.path())?;
    let summary = cmd_calibrate(&cfg, &dir.path().join("data"), &trained.model_path, dir.path())?;
    println!(
        "threshold {:.5} at target FPR {} ({:?} pooling)",
        summary.gamma, cfg.detector.target_fpr, cfg.detector.fpr_mode
    );

    // The curve shows how the threshold would move with the FPR target;
    // it is non-increasing by quantile monotonicity.
    let curve = std::fs::read_to_string(&summary.curve_path)?;
    println!("\nfpr,gamma (every 10th row of {}):", summary.curve_path.display());
    for line in curve.lines().skip(1).step_by(10) {
        println!("  {line}");
    }
    Ok(())
}
