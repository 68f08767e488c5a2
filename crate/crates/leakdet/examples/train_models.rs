//! Train the feature extractor and the one-class SVM on the no-leak train
//! split, then save the combined versioned model file.
//!
//! ```text
//! cargo run --example train_models
//! ```

use leakdet::commands::{cmd_generate, cmd_train};
use leakdet::config::RunConfig;
use leakdet::model_file::load_bundle;
use leakdet::presets;

fn main() -> leakdet::Result<()> {
    let dir = tempfile::tempdir()?;
    let config_path = presets::write_tiny_workspace(dir.path(), 11)?;
    let cfg = RunConfig::load(&config_path)?;

    cmd_generate(&cfg, dir.path())?;
    let summary = cmd_train(&cfg, &dir.path().join("data"), dir.path())?;
    println!(
        "trained {} steps; validation loss {:.4} -> {:.4}",
        summary.steps, summary.initial_val_loss, summary.final_val_loss
    );
    println!(
        "one-class SVM fitted on {} embeddings, kept {} support vectors",
        summary.ocsvm_training_embeddings, summary.support_vectors
    );
    println!("model file: {} (sha256 {})", summary.model_path.display(), summary.model_hash);

    // The file round-trips into an inference-ready bundle.
    let bundle = load_bundle(&summary.model_path)?;
    println!(
        "bundle: K={}, L={}, embedding dim {}, rho {:.4}, gamma {:.5}",
        bundle.nodes(),
        bundle.window_len(),
        bundle.encoder.embedding_dim(),
        bundle.ocsvm.rho,
        bundle.ocsvm.gamma
    );
    Ok(())
}
