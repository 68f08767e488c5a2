// Scratch harness for desk-scale calibration measurements. Not part of the
// shipped examples; removed once constants are frozen.

use std::time::Instant;

use leakdet::autoencoder::{reconstruction_mse, train};
use leakdet::detector::{calibrate_threshold, run_pipeline, score_trace, FprMode};
use leakdet::evaluation::{assemble_report, noise_sweep, outcome_for};
use leakdet::model_file::ModelBundle;
use leakdet::ocsvm;
use leakdet::presets;
use leakdet::scenario::{generate_dataset, Scenario, Split};
use leakdet::window::{fit_stats, normalize_series, window_at, window_ends};

fn main() {
    let master_seed: u64 = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(1);
    let cfg = presets::desk_run_config(master_seed);
    let net = presets::desk_network();

    let t0 = Instant::now();
    let set = generate_dataset(&net, &cfg.generation_config()).unwrap();
    println!("[gen] {} scenarios in {:?}", set.len(), t0.elapsed());

    let train_refs: Vec<&Scenario> = set.split(Split::Train);
    let val_refs: Vec<&Scenario> = set.split(Split::Validation);
    let test_refs: Vec<&Scenario> = set.split(Split::Test);

    let stats = fit_stats(&train_refs).unwrap();
    let t1 = Instant::now();
    let out = train(&train_refs, &val_refs[..8].to_vec(), &stats, cfg.window.length, &cfg.train_config()).unwrap();
    println!(
        "[train] {} steps in {:?}; val loss {:.4} -> {:.4}",
        out.steps,
        t1.elapsed(),
        out.initial_val_loss,
        out.final_val_loss
    );

    // OCSVM on training-window embeddings.
    let t2 = Instant::now();
    let mut embeddings = Vec::new();
    for s in &train_refs {
        let normalized = normalize_series(&s.pressures, &stats).unwrap();
        for e in out.encoder.scan_embeddings(&normalized).unwrap() {
            if (e.end_sample + 1 - cfg.window.length) % cfg.window.train_stride == 0 {
                embeddings.push(e.values);
            }
        }
    }
    println!("[embed] {} embeddings in {:?}", embeddings.len(), t2.elapsed());
    let cap = cfg.ocsvm.max_train_embeddings;
    let kept: Vec<Vec<f64>> = if embeddings.len() > cap {
        let n = embeddings.len();
        embeddings
            .into_iter()
            .enumerate()
            .filter(|(i, _)| i * cap / n != (i + 1) * cap / n)
            .map(|(_, e)| e)
            .collect()
    } else {
        embeddings
    };
    let t3 = Instant::now();
    let gamma_mult: f64 = std::env::args().nth(2).and_then(|s| s.parse().ok()).unwrap_or(1.0);
    let base_gamma = ocsvm::resolve_gamma(&kept, leakdet::ocsvm::GammaPolicy::Scale).unwrap();
    let mut fit_opts = cfg.fit_options();
    fit_opts.gamma = leakdet::ocsvm::GammaPolicy::Fixed(base_gamma * gamma_mult);
    let svm = ocsvm::fit(&kept, &fit_opts).unwrap();
    println!(
        "[svm] m={} svs={} rho={:.4} gamma={:.3e} (x{gamma_mult}) in {:?}",
        kept.len(),
        svm.support_vectors.len(),
        svm.rho,
        svm.gamma,
        t3.elapsed()
    );

    let bundle = ModelBundle { encoder: out.encoder.clone(), decoder: out.decoder.clone(), ocsvm: svm, norm: stats.clone() };
    let det = cfg.detector_config();

    // Validation traces.
    let t4 = Instant::now();
    let val_traces: Vec<Vec<f64>> = val_refs.iter().map(|s| score_trace(s, &bundle, &det).unwrap().smoothed).collect();
    println!("[val scoring] 50 scenarios in {:?}", t4.elapsed());

    let gamma_ps = calibrate_threshold(&val_traces, 0.10, FprMode::PerSample).unwrap();
    let gamma_sc = calibrate_threshold(&val_traces, 0.10, FprMode::PerScenarioMax).unwrap();
    println!("[gamma] per-sample {gamma_ps:.5}  per-scenario-max {gamma_sc:.5}");

    // Test traces once; evaluate both gammas.
    let t5 = Instant::now();
    let test_results: Vec<(&Scenario, leakdet::detector::ScoreTrace)> =
        test_refs.iter().map(|s| (*s, score_trace(s, &bundle, &det).unwrap())).collect();
    println!("[test scoring] 40 scenarios in {:?}", t5.elapsed());

    // Realized per-sample FPR on a dedicated fresh no-leak pool at gamma_ps.
    let mut fresh_cfg = cfg.generation_config();
    fresh_cfg.train_count = 0;
    fresh_cfg.validation_count = 0;
    fresh_cfg.test_count = 60;
    fresh_cfg.leak_fraction.test = 0.0;
    fresh_cfg.master_seed = master_seed ^ 0xFEE1;
    let fresh = generate_dataset(&net, &fresh_cfg).unwrap();
    let mut qs = Vec::new();
    for s in fresh.split(Split::Test) {
        let t = score_trace(s, &bundle, &det).unwrap().smoothed;
        qs.push(t.iter().filter(|v| **v >= gamma_ps).count() as f64 / t.len() as f64);
    }
    let qmean = qs.iter().sum::<f64>() / qs.len() as f64;
    let qsd = (qs.iter().map(|q| (q - qmean) * (q - qmean)).sum::<f64>() / qs.len() as f64).sqrt();
    println!(
        "[fpr] fresh-pool realized per-sample FPR {:.4} (per-scenario sd {:.4}, n={})",
        qmean,
        qsd,
        qs.len()
    );

    for (tag, gamma) in [("per-sample", gamma_ps), ("per-scenario-max", gamma_sc)] {
        let rows: Vec<_> = test_results
            .iter()
            .map(|(s, trace)| {
                let flags = leakdet::detector::classify(&trace.smoothed, gamma);
                let first = leakdet::detector::leak_start(&flags, trace.start_sample, s.sample_period_hours);
                let result = leakdet::detector::DetectionResult {
                    decision: first.is_some(),
                    first_alarm_sample: first.map(|(n, _)| n),
                    first_alarm_hours: first.map(|(_, t)| t),
                    trace: trace.clone(),
                };
                outcome_for(s, &result)
            })
            .collect();
        let report = assemble_report(tag, rows).unwrap();
        println!(
            "[eval {tag}] accuracy {:.3} meanDD {:?} tp={} tn={} fp={} fn={}",
            report.accuracy,
            report.mean_detection_delay_hours,
            report.true_positives,
            report.true_negatives,
            report.false_positives,
            report.false_negatives
        );
    }

    // Reconstruction-gap measurement (stride 24 windows).
    let mut noleak_mse = Vec::new();
    let mut leak_mse = Vec::new();
    for s in &test_refs {
        let normalized = normalize_series(&s.pressures, &stats).unwrap();
        for end in window_ends(s.sample_count(), cfg.window.length, 24) {
            let w = window_at(&normalized, cfg.window.length, end).unwrap();
            let mse = reconstruction_mse(&w, &bundle.encoder, &bundle.decoder).unwrap();
            match &s.leak {
                Some(leak) if end >= leak.onset_sample + cfg.window.length => leak_mse.push(mse),
                None => noleak_mse.push(mse),
                _ => {}
            }
        }
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    println!(
        "[recon gap] no-leak {:.4} (n={}), post-onset leak {:.4} (n={}), ratio {:.2}",
        mean(&noleak_mse),
        noleak_mse.len(),
        mean(&leak_mse),
        leak_mse.len(),
        mean(&leak_mse) / mean(&noleak_mse)
    );

    // Noise sweep at the operating gamma.
    let t6 = Instant::now();
    let gamma = gamma_sc;
    let reports = noise_sweep(&test_refs, &bundle, gamma, &det, &[45.0, 25.0], 555, cfg.noise.reference).unwrap();
    for r in &reports {
        println!(
            "[noise {}] accuracy {:.3} meanDD {:?} fp={} fn={}",
            r.condition, r.accuracy, r.mean_detection_delay_hours, r.false_positives, r.false_negatives
        );
    }
    println!("[noise] 2 x 40 scenarios in {:?}", t6.elapsed());

    // Cross-network at K'=8.
    let t7 = Instant::now();
    let foreign_net = presets::foreign_network();
    let mut gen_cfg = cfg.generation_config();
    gen_cfg.train_count = 0;
    gen_cfg.validation_count = 0;
    gen_cfg.test_count = 20;
    gen_cfg.leak_fraction.test = 0.5;
    gen_cfg.master_seed = master_seed ^ 0xF0E1;
    let foreign = generate_dataset(&foreign_net, &gen_cfg).unwrap();
    let foreign_refs: Vec<&Scenario> = foreign.split(Split::Test);
    let rows: Vec<_> = foreign_refs
        .iter()
        .map(|s| {
            let r = run_pipeline(s, &bundle, gamma, &det).unwrap();
            outcome_for(s, &r)
        })
        .collect();
    let report = assemble_report("foreign8", rows).unwrap();
    println!(
        "[cross] accuracy {:.3} meanDD {:?} in {:?}",
        report.accuracy,
        report.mean_detection_delay_hours,
        t7.elapsed()
    );
    println!("[total] {:?}", t0.elapsed());
}
