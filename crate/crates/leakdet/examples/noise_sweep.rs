//! Noise-robustness study: Gaussian noise injected at chosen SNR levels at
//! test time only (the model stays clean-trained), re-evaluating accuracy and
//! detection delay per level.
//!
//! ```text
//! cargo run --example noise_sweep
//! ```

use leakdet::commands::{cmd_calibrate, cmd_generate, cmd_noise_sweep, cmd_train};
use leakdet::config::RunConfig;
use leakdet::evaluation::format_table;
use leakdet::presets;

fn main() -> leakdet::Result<()> {
    let dir = tempfile::tempdir()?;
    let config_path = presets::write_tiny_workspace(dir.path(), 23)?;
    let cfg = RunConfig::load(&config_path)?;

    cmd_generate(&cfg, dir.path())?;
    let data_dir = dir.path().join("data");
    let trained = cmd_train(&cfg, &data_dir, dir.path())?;
    let calibrated = cmd_calibrate(&cfg, &data_dir, &trained.model_path, dir.path())?;

    // The infinite-SNR sentinel reproduces the clean run; the finite levels
    // inject seeded per-node noise before the preprocessing stage.
    let reports = cmd_noise_sweep(
        &cfg,
        &data_dir,
        &trained.model_path,
        &calibrated.record_path,
        dir.path(),
        Some(vec![f64::INFINITY, 45.0, 25.0]),
    )?;
    let refs: Vec<_> = reports.iter().collect();
    print!("{}", format_table("Detection Accuracy and Delay for different SNR levels", &refs));
    Ok(())
}
