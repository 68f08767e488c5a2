//! Thin CLI over the library commands. See `examples/` for the richer,
//! self-contained walkthroughs of each capability.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use leakdet::commands;
use leakdet::config::RunConfig;
use leakdet::evaluation::format_table;

#[derive(Parser)]
#[command(
    name = "leakdet",
    about = "Water network leak detection: scenario generation, training, calibration and evaluation",
    version
)]
struct Cli {
    /// TOML run configuration.
    #[arg(long, global = true, default_value = "leakdet.toml")]
    config: PathBuf,
    /// Output directory. Falls back to $LEAKDET_OUT, then ./leakdet-out.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Override dataset.master_seed.
    #[arg(long, global = true)]
    master_seed: Option<u64>,
    /// Override detector.target_fpr.
    #[arg(long, global = true)]
    target_fpr: Option<f64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the scenario dataset (CSV per scenario plus manifest).
    Generate,
    /// Train the autoencoder and one-class SVM on the no-leak train split.
    Train {
        /// Dataset directory (defaults to <out>/data).
        #[arg(long)]
        data: Option<PathBuf>,
    },
    /// Calibrate the detection threshold on the no-leak validation split.
    Calibrate {
        #[arg(long)]
        data: Option<PathBuf>,
        /// Model file (defaults to <out>/model.bin).
        #[arg(long)]
        model: Option<PathBuf>,
    },
    /// Evaluate the test split: accuracy, detection delay, traces.
    Evaluate {
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        model: Option<PathBuf>,
        /// Threshold record (defaults to <out>/threshold.json).
        #[arg(long)]
        threshold: Option<PathBuf>,
    },
    /// Re-evaluate the test split under test-time Gaussian noise.
    NoiseSweep {
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long)]
        threshold: Option<PathBuf>,
        /// Comma-separated SNR levels in dB, overriding the config.
        #[arg(long, value_delimiter = ',')]
        snr: Option<Vec<f64>>,
    },
    /// Evaluate the foreign network from [cross_network] via node replication.
    CrossNetwork {
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long)]
        threshold: Option<PathBuf>,
    },
}

fn out_dir(cli: &Cli) -> PathBuf {
    cli.out
        .clone()
        .or_else(|| std::env::var_os("LEAKDET_OUT").map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("leakdet-out"))
}

fn run(cli: &Cli) -> leakdet::Result<()> {
    let out = out_dir(cli);
    let mut cfg = RunConfig::load(&cli.config)?;
    if let Some(seed) = cli.master_seed {
        cfg.dataset.master_seed = seed;
    }
    if let Some(fpr) = cli.target_fpr {
        cfg.detector.target_fpr = fpr;
        cfg.validate()?;
    }
    let data_default = out.join("data");
    let model_default = out.join("model.bin");
    let threshold_default = out.join("threshold.json");

    match &cli.command {
        Command::Generate => {
            let summary = commands::cmd_generate(&cfg, &out)?;
            println!(
                "generated {} scenarios under {} (manifest: {})",
                summary.scenario_count,
                summary.data_dir.display(),
                summary.manifest_path.display()
            );
        }
        Command::Train { data } => {
            let summary = commands::cmd_train(&cfg, data.as_ref().unwrap_or(&data_default), &out)?;
            println!(
                "trained in {} steps: validation loss {:.4} -> {:.4}, {} support vectors",
                summary.steps, summary.initial_val_loss, summary.final_val_loss, summary.support_vectors
            );
            println!("model: {} (sha256 {})", summary.model_path.display(), summary.model_hash);
        }
        Command::Calibrate { data, model } => {
            let summary = commands::cmd_calibrate(
                &cfg,
                data.as_ref().unwrap_or(&data_default),
                model.as_ref().unwrap_or(&model_default),
                &out,
            )?;
            println!(
                "threshold {} at target FPR {} (record: {})",
                summary.gamma,
                cfg.detector.target_fpr,
                summary.record_path.display()
            );
        }
        Command::Evaluate { data, model, threshold } => {
            let summary = commands::cmd_evaluate(
                &cfg,
                data.as_ref().unwrap_or(&data_default),
                model.as_ref().unwrap_or(&model_default),
                threshold.as_ref().unwrap_or(&threshold_default),
                &out,
            )?;
            let dd = summary
                .mean_detection_delay_hours
                .map(|v| format!("{v:.2} h"))
                .unwrap_or_else(|| "-".into());
            println!("accuracy {:.2}, mean detection delay {dd}", summary.accuracy);
            println!("reports: {}", summary.report_dir.display());
        }
        Command::NoiseSweep { data, model, threshold, snr } => {
            let reports = commands::cmd_noise_sweep(
                &cfg,
                data.as_ref().unwrap_or(&data_default),
                model.as_ref().unwrap_or(&model_default),
                threshold.as_ref().unwrap_or(&threshold_default),
                &out,
                snr.clone(),
            )?;
            let refs: Vec<_> = reports.iter().collect();
            print!("{}", format_table("Detection Accuracy and Delay for different SNR levels", &refs));
        }
        Command::CrossNetwork { model, threshold } => {
            let report = commands::cmd_cross_network(
                &cfg,
                model.as_ref().unwrap_or(&model_default),
                threshold.as_ref().unwrap_or(&threshold_default),
                &out,
            )?;
            print!("{}", format_table("Cross-network Detection Accuracy and Delay", &[&report]));
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
