//! Generate a seeded scenario dataset: per-scenario CSV files with an
//! ISO-8601 timestamp column, JSON sidecars carrying the ground truth, and a
//! split manifest.
//!
//! ```text
//! cargo run --example generate_dataset
//! ```

use leakdet::commands::cmd_generate;
use leakdet::config::RunConfig;
use leakdet::presets;
use leakdet::scenario::{read_scenario, Manifest, Split};

fn main() -> leakdet::Result<()> {
    let dir = tempfile::tempdir()?;
    let config_path = presets::write_tiny_workspace(dir.path(), 7)?;
    let cfg = RunConfig::load(&config_path)?;

    let summary = cmd_generate(&cfg, dir.path())?;
    println!("wrote {} scenarios under {}", summary.scenario_count, summary.data_dir.display());

    let manifest = Manifest::load(&summary.manifest_path)?;
    for split in [Split::Train, Split::Validation, Split::Test] {
        println!("  {:<10} {:?}", split.as_str(), manifest.split_ids(split));
    }

    // Peek at one leak scenario's ground truth.
    let id = manifest
        .split_ids(Split::Test)
        .iter()
        .find(|id| {
            read_scenario(&summary.data_dir, id).map(|s| s.label).unwrap_or(false)
        })
        .cloned()
        .expect("test split contains leak scenarios");
    let scenario = read_scenario(&summary.data_dir, &id)?;
    let leak = scenario.leak.clone().expect("labeled scenario has a leak record");
    println!(
        "\n{id}: {} nodes x {} samples, leak at node {} (magnitude {:.2}) from sample {} ({} h)",
        scenario.node_count(),
        scenario.sample_count(),
        leak.node_index,
        leak.magnitude,
        leak.onset_sample,
        leak.onset_hours
    );

    // The drop is visible in the raw series of the leaking node.
    let row = scenario.pressures.row(leak.node_index);
    let before: f64 = row[..leak.onset_sample].iter().sum::<f64>() / leak.onset_sample as f64;
    let after: f64 =
        row[leak.onset_sample..].iter().sum::<f64>() / (row.len() - leak.onset_sample) as f64;
    println!("mean pressure at the leak node: {before:.3} m before onset, {after:.3} m after");
    Ok(())
}
