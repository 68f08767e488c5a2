//! Evaluate the mixed test split end to end: scenario accuracy, mean
//! detection delay, and per-scenario outcome rows.
//!
//! ```text
//! cargo run --example evaluate_testset
//! ```

use leakdet::commands::{cmd_calibrate, cmd_evaluate, cmd_generate, cmd_train};
use leakdet::config::RunConfig;
use leakdet::presets;

fn main() -> leakdet::Result<()> {
    let dir = tempfile::tempdir()?;
    let config_path = presets::write_tiny_workspace(dir.path(), 19)?;
    let cfg = RunConfig::load(&config_path)?;

    cmd_generate(&cfg, dir.path())?;
    let data_dir = dir.path().join("data");
    let trained = cmd_train(&cfg, &data_dir, dir.path())?;
    let calibrated = cmd_calibrate(&cfg, &data_dir, &trained.model_path, dir.path())?;
    let summary = cmd_evaluate(&cfg, &data_dir, &trained.model_path, &calibrated.record_path, dir.path())?;

    let dd = summary
        .mean_detection_delay_hours
        .map(|v| format!("{v:.1} h"))
        .unwrap_or_else(|| "-".into());
    println!("accuracy {:.2}, mean detection delay {dd}", summary.accuracy);

    println!("\nper-scenario rows ({}):", summary.report_dir.join("report.csv").display());
    let report = std::fs::read_to_string(summary.report_dir.join("report.csv"))?;
    for line in report.lines() {
        println!("  {line}");
    }
    println!("\nscore traces for plotting: {}", summary.report_dir.join("traces").display());
    Ok(())
}
