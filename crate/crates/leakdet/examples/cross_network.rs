//! Apply a trained detector to a different, smaller network: scenario rows
//! are replicated cyclically to match the model's input width, every node is
//! standardized against its own setup window, and the standard pipeline runs
//! unchanged.
//!
//! ```text
//! cargo run --example cross_network
//! ```

use leakdet::commands::{cmd_calibrate, cmd_cross_network, cmd_generate, cmd_train};
use leakdet::config::RunConfig;
use leakdet::evaluation::format_table;
use leakdet::presets;

fn main() -> leakdet::Result<()> {
    let dir = tempfile::tempdir()?;
    let config_path = presets::write_tiny_workspace(dir.path(), 29)?;
    let cfg = RunConfig::load(&config_path)?;
    let cross = cfg.cross_network.as_ref().expect("preset configures a foreign network");
    println!(
        "model network: {}, foreign network: {} ({} scenarios)",
        cfg.topology.path.display(),
        cross.topology_path.display(),
        cross.scenario_count
    );

    cmd_generate(&cfg, dir.path())?;
    let data_dir = dir.path().join("data");
    let trained = cmd_train(&cfg, &data_dir, dir.path())?;
    let calibrated = cmd_calibrate(&cfg, &data_dir, &trained.model_path, dir.path())?;
    let report = cmd_cross_network(&cfg, &trained.model_path, &calibrated.record_path, dir.path())?;
    print!("{}", format_table("Cross-network Detection Accuracy and Delay", &[&report]));
    Ok(())
}
