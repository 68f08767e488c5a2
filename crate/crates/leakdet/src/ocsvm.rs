//! One-class SVM on embeddings: RBF kernel, nu-parameterized dual solved by
//! sequential pairwise (SMO-style) updates, and a soft anomaly score.
//!
//! The dual is `min 1/2 a' Q a` subject to `0 <= a_i <= 1/(nu m)` and
//! `sum a = 1`, with `Q_ij = k(x_i, x_j)`. Optimality means no pair can be
//! improved: `max_{a_i > 0} G_i - min_{a_j < C} G_j <= tol` with `G = Q a`.
//! The offset `rho` is the value of `G` on margin support vectors, and the
//! anomaly score of a point `f` is `rho - sum_i a_i k(x_i, f)`: higher means
//! more anomalous, and the smoothed score is later thresholded from above.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Fitted one-class SVM. Stored support vectors are exactly the training
/// points with a strictly positive dual coefficient.
#[derive(Debug, Clone)]
pub struct OcSvmModel {
    pub support_vectors: Vec<Vec<f64>>,
    pub alphas: Vec<f64>,
    pub rho: f64,
    pub gamma: f64,
    pub nu: f64,
    pub dim: usize,
}

/// Kernel width policy.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GammaPolicy {
    /// `1 / (dim * mean feature variance)` over the training embeddings.
    Scale,
    Fixed(f64),
}

/// Solver options.
#[derive(Debug, Clone)]
pub struct FitOptions {
    pub nu: f64,
    pub gamma: GammaPolicy,
    /// Maximum tolerated KKT violation at convergence.
    pub kkt_tol: f64,
    /// Iteration budget; 0 picks `200 * m` with a floor of 100_000.
    pub max_iter: usize,
    /// Seed for the tie-breaking scan order.
    pub seed: u64,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions { nu: 0.1, gamma: GammaPolicy::Scale, kkt_tol: 1e-5, max_iter: 0, seed: 0 }
    }
}

/// KKT diagnostics of a fitted model against its training set.
#[derive(Debug, Clone)]
pub struct KktReport {
    pub max_violation: f64,
    pub support_count: usize,
    /// Support vectors at the upper box bound.
    pub bounded_count: usize,
    pub free_count: usize,
    /// Dual objective `1/2 a' Q a`.
    pub objective: f64,
}

/// RBF kernel `exp(-gamma ||x - y||^2)`.
pub fn rbf_kernel(x: &[f64], y: &[f64], gamma: f64) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::Shape(format!("kernel over dimensions {} vs {}", x.len(), y.len())));
    }
    let mut d2 = 0.0;
    for (a, b) in x.iter().zip(y) {
        let d = a - b;
        d2 += d * d;
    }
    Ok((-gamma * d2).exp())
}

/// Resolves the kernel width for a training set.
pub fn resolve_gamma(embeddings: &[Vec<f64>], policy: GammaPolicy) -> Result<f64> {
    match policy {
        GammaPolicy::Fixed(g) => {
            if !(g > 0.0) || !g.is_finite() {
                return Err(Error::Config(format!("gamma {g} must be positive and finite")));
            }
            Ok(g)
        }
        GammaPolicy::Scale => {
            let m = embeddings.len();
            let d = embeddings[0].len();
            let mut total_var = 0.0;
            for j in 0..d {
                let mean = embeddings.iter().map(|e| e[j]).sum::<f64>() / m as f64;
                total_var += embeddings.iter().map(|e| (e[j] - mean) * (e[j] - mean)).sum::<f64>() / m as f64;
            }
            let mean_var = total_var / d as f64;
            if mean_var <= f64::EPSILON {
                // Degenerate (constant) embeddings: fall back to unit distance scale.
                return Ok(1.0 / d as f64);
            }
            Ok(1.0 / (d as f64 * mean_var))
        }
    }
}

fn scan_extremes(
    alphas: &[f64],
    grad: &[f64],
    c: f64,
    perm: &[usize],
) -> (Option<usize>, Option<usize>) {
    // i: minimal gradient among a_i < C (can grow), j: maximal gradient among
    // a_j > 0 (can shrink). Strict comparisons resolve ties by the seeded
    // permutation order.
    let mut up: Option<usize> = None;
    let mut down: Option<usize> = None;
    for &idx in perm {
        if alphas[idx] < c {
            if up.map_or(true, |u| grad[idx] < grad[u]) {
                up = Some(idx);
            }
        }
        if alphas[idx] > 0.0 {
            if down.map_or(true, |d| grad[idx] > grad[d]) {
                down = Some(idx);
            }
        }
    }
    (up, down)
}

fn recompute_gradient(q: &[Vec<f64>], alphas: &[f64]) -> Vec<f64> {
    let m = alphas.len();
    let mut grad = vec![0.0; m];
    for (j, &a) in alphas.iter().enumerate() {
        if a > 0.0 {
            let qrow = &q[j];
            for (g, qv) in grad.iter_mut().zip(qrow) {
                *g += a * qv;
            }
        }
    }
    grad
}

/// Fits the nu-one-class dual by sequential pairwise updates.
pub fn fit(embeddings: &[Vec<f64>], opts: &FitOptions) -> Result<OcSvmModel> {
    let m = embeddings.len();
    if m < 2 {
        return Err(Error::Data(format!("one-class SVM needs at least 2 embeddings, got {m}")));
    }
    if !(opts.nu > 0.0 && opts.nu <= 1.0) {
        return Err(Error::Config(format!("nu {} not in (0, 1]", opts.nu)));
    }
    let dim = embeddings[0].len();
    if embeddings.iter().any(|e| e.len() != dim) {
        return Err(Error::Shape("embeddings disagree on dimension".into()));
    }
    let gamma = resolve_gamma(embeddings, opts.gamma)?;

    // Dense kernel matrix; training sets are subsampled upstream so m stays
    // modest.
    let mut q = vec![vec![0.0; m]; m];
    for i in 0..m {
        q[i][i] = 1.0;
        for j in (i + 1)..m {
            let v = rbf_kernel(&embeddings[i], &embeddings[j], gamma)?;
            if !v.is_finite() {
                return Err(Error::Numerical("degenerate kernel matrix (non-finite entry)".into()));
            }
            q[i][j] = v;
            q[j][i] = v;
        }
    }

    let c = 1.0 / (opts.nu * m as f64);
    let mut alphas = vec![0.0; m];
    let n_full = (opts.nu * m as f64).floor() as usize;
    for a in alphas.iter_mut().take(n_full.min(m)) {
        *a = c;
    }
    if n_full < m {
        alphas[n_full] = (1.0 - n_full as f64 * c).max(0.0);
    }

    let mut perm: Vec<usize> = (0..m).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed ^ 0x0C57);
    for i in (1..m).rev() {
        let j = rng.gen_range(0..=i);
        perm.swap(i, j);
    }

    let mut grad = recompute_gradient(&q, &alphas);
    let budget = if opts.max_iter == 0 { (200 * m).max(100_000) } else { opts.max_iter };
    let mut converged = false;
    let mut iter = 0usize;
    while iter < budget {
        let (up, down) = scan_extremes(&alphas, &grad, c, &perm);
        let (Some(i), Some(j)) = (up, down) else {
            converged = true; // nothing movable (nu = 1 box)
            break;
        };
        let violation = grad[j] - grad[i];
        if violation <= opts.kkt_tol {
            // Guard against incremental drift before declaring convergence.
            grad = recompute_gradient(&q, &alphas);
            let (up2, down2) = scan_extremes(&alphas, &grad, c, &perm);
            let (Some(i2), Some(j2)) = (up2, down2) else {
                converged = true;
                break;
            };
            if grad[j2] - grad[i2] <= opts.kkt_tol {
                converged = true;
                break;
            }
            iter += 1;
            continue;
        }
        let eta = (q[i][i] + q[j][j] - 2.0 * q[i][j]).max(1e-12);
        let room = (c - alphas[i]).min(alphas[j]);
        let delta = (violation / eta).min(room);
        if delta == room {
            // Hitting a bound: land exactly on it.
            if c - alphas[i] <= alphas[j] {
                alphas[i] = c;
                alphas[j] -= room;
            } else {
                alphas[i] += room;
                alphas[j] = 0.0;
            }
        } else {
            alphas[i] += delta;
            alphas[j] -= delta;
        }
        for (g, (qi, qj)) in grad.iter_mut().zip(q[i].iter().zip(&q[j])) {
            *g += delta * (qi - qj);
        }
        iter += 1;
    }
    if !converged {
        return Err(Error::Numerical(format!(
            "one-class SVM did not reach KKT tolerance {} within {budget} iterations",
            opts.kkt_tol
        )));
    }

    // rho: gradient value on free support vectors; midpoint of the feasible
    // interval when every coefficient sits on a bound.
    let free: Vec<usize> = (0..m).filter(|&i| alphas[i] > 0.0 && alphas[i] < c).collect();
    let rho = if !free.is_empty() {
        free.iter().map(|&i| grad[i]).sum::<f64>() / free.len() as f64
    } else {
        let lo = (0..m).filter(|&i| alphas[i] >= c).map(|i| grad[i]).fold(f64::NEG_INFINITY, f64::max);
        let hi = (0..m).filter(|&i| alphas[i] <= 0.0).map(|i| grad[i]).fold(f64::INFINITY, f64::min);
        match (lo.is_finite(), hi.is_finite()) {
            (true, true) => 0.5 * (lo + hi),
            (true, false) => lo,
            (false, true) => hi,
            (false, false) => 0.0,
        }
    };

    let mut support_vectors = Vec::new();
    let mut sv_alphas = Vec::new();
    for i in 0..m {
        if alphas[i] > 0.0 {
            support_vectors.push(embeddings[i].clone());
            sv_alphas.push(alphas[i]);
        }
    }
    Ok(OcSvmModel { support_vectors, alphas: sv_alphas, rho, gamma, nu: opts.nu, dim })
}

/// Soft anomaly score `rho - sum_i a_i k(x_i, f)`; positive values lie
/// outside the learned boundary.
pub fn anomaly_score(f: &[f64], model: &OcSvmModel) -> Result<f64> {
    if f.len() != model.dim {
        return Err(Error::Shape(format!(
            "embedding dimension {} does not match model dimension {}",
            f.len(),
            model.dim
        )));
    }
    let mut acc = 0.0;
    for (sv, a) in model.support_vectors.iter().zip(&model.alphas) {
        acc += a * rbf_kernel(sv, f, model.gamma)?;
    }
    Ok(model.rho - acc)
}

/// Dual objective `1/2 a' Q a` of a fitted model.
pub fn dual_objective(model: &OcSvmModel) -> f64 {
    let mut acc = 0.0;
    for (i, (svi, ai)) in model.support_vectors.iter().zip(&model.alphas).enumerate() {
        for (svj, aj) in model.support_vectors.iter().zip(&model.alphas).skip(i + 1) {
            acc += 2.0 * ai * aj * rbf_kernel(svi, svj, model.gamma).expect("matching dims");
        }
        acc += ai * ai; // k(x, x) = 1
    }
    0.5 * acc
}

/// KKT diagnostics against the training embeddings the model was fitted on.
/// Support vectors are matched back to training rows by exact equality.
pub fn kkt_report(model: &OcSvmModel, embeddings: &[Vec<f64>]) -> Result<KktReport> {
    let m = embeddings.len();
    let c = 1.0 / (model.nu * m as f64);
    let mut full_alphas = vec![0.0; m];
    let mut used = vec![false; m];
    for (sv, a) in model.support_vectors.iter().zip(&model.alphas) {
        let idx = embeddings
            .iter()
            .enumerate()
            .position(|(i, e)| !used[i] && e == sv)
            .ok_or_else(|| Error::Data("support vector not found in the training embeddings".into()))?;
        used[idx] = true;
        full_alphas[idx] = *a;
    }
    let mut grad = vec![0.0; m];
    for (j, a) in full_alphas.iter().enumerate() {
        if *a > 0.0 {
            for (i, g) in grad.iter_mut().enumerate() {
                *g += a * rbf_kernel(&embeddings[j], &embeddings[i], model.gamma)?;
            }
        }
    }
    let mut g_up = f64::INFINITY; // min over a_i < C
    let mut g_down = f64::NEG_INFINITY; // max over a_i > 0
    for i in 0..m {
        if full_alphas[i] < c {
            g_up = g_up.min(grad[i]);
        }
        if full_alphas[i] > 0.0 {
            g_down = g_down.max(grad[i]);
        }
    }
    let max_violation = (g_down - g_up).max(0.0);
    let support_count = full_alphas.iter().filter(|a| **a > 0.0).count();
    let bounded_count = full_alphas.iter().filter(|a| **a >= c).count();
    Ok(KktReport {
        max_violation,
        support_count,
        bounded_count,
        free_count: support_count - bounded_count,
        objective: dual_objective(model),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn blob(m: usize, dim: usize, seed: u64) -> Vec<Vec<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..m)
            .map(|_| (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect())
            .collect()
    }

    #[test]
    fn kernel_basics() {
        let x = vec![0.3, -0.7, 2.0];
        let y = vec![1.3, -0.7, 2.0]; // ||x-y||^2 = 1
        assert_eq!(rbf_kernel(&x, &x, 0.8).unwrap(), 1.0);
        let v = rbf_kernel(&x, &y, 1.0).unwrap();
        assert!((v - (-1.0f64).exp()).abs() < 1e-12, "expected e^-1, got {v}");
        assert_eq!(rbf_kernel(&x, &y, 0.37).unwrap(), rbf_kernel(&y, &x, 0.37).unwrap());
        assert!(rbf_kernel(&x, &y[..2], 1.0).is_err());
    }

    #[test]
    fn two_identical_points_split_evenly() {
        let embeddings = vec![vec![1.0, 2.0], vec![1.0, 2.0]];
        let model = fit(&embeddings, &FitOptions { nu: 1.0, ..FitOptions::default() }).unwrap();
        assert_eq!(model.alphas, vec![0.5, 0.5]);
    }

    #[test]
    fn dual_feasibility_after_fit() {
        let embeddings = blob(120, 6, 3);
        let model = fit(&embeddings, &FitOptions::default()).unwrap();
        let sum: f64 = model.alphas.iter().sum();
        assert!((sum - 1.0).abs() <= 1e-10, "sum alpha = {sum}");
        let c = 1.0 / (model.nu * embeddings.len() as f64);
        assert!(model.alphas.iter().all(|a| *a > 0.0 && *a <= c));
    }

    #[test]
    fn kkt_violation_within_tolerance() {
        let embeddings = blob(150, 5, 9);
        let opts = FitOptions::default();
        let model = fit(&embeddings, &opts).unwrap();
        let report = kkt_report(&model, &embeddings).unwrap();
        assert!(
            report.max_violation <= opts.kkt_tol,
            "violation {} exceeds {}",
            report.max_violation,
            opts.kkt_tol
        );
        assert_eq!(report.support_count, model.alphas.len());
    }

    #[test]
    fn margin_support_vector_scores_zero() {
        let embeddings = blob(80, 4, 4);
        let model = fit(&embeddings, &FitOptions::default()).unwrap();
        let c = 1.0 / (model.nu * embeddings.len() as f64);
        let margin = model
            .alphas
            .iter()
            .position(|a| *a > 1e-12 && *a < c - 1e-12)
            .expect("fit produced no margin support vector");
        let score = anomaly_score(&model.support_vectors[margin], &model).unwrap();
        assert!(score.abs() <= 1e-5 + 1e-12, "margin SV score {score}");
    }

    #[test]
    fn far_point_scores_rho() {
        let embeddings = blob(50, 4, 8);
        let model = fit(&embeddings, &FitOptions::default()).unwrap();
        let far = vec![1e6; 4];
        let score = anomaly_score(&far, &model).unwrap();
        assert!((score - model.rho).abs() < 1e-9);
        assert!(score > 0.0, "a far point must be anomalous");
    }

    #[test]
    fn batch_scoring_matches_individual() {
        let embeddings = blob(60, 4, 2);
        let model = fit(&embeddings, &FitOptions::default()).unwrap();
        let probes = blob(10, 4, 99);
        let batch: Vec<f64> = probes.iter().map(|p| anomaly_score(p, &model).unwrap()).collect();
        for (p, b) in probes.iter().zip(&batch) {
            assert_eq!(anomaly_score(p, &model).unwrap(), *b);
        }
    }

    #[test]
    fn nu_one_forces_uniform_alphas() {
        let embeddings = blob(12, 3, 5);
        let model = fit(&embeddings, &FitOptions { nu: 1.0, ..FitOptions::default() }).unwrap();
        assert_eq!(model.alphas.len(), 12);
        for a in &model.alphas {
            assert!((a - 1.0 / 12.0).abs() < 1e-15);
        }
        let report = kkt_report(&model, &embeddings).unwrap();
        assert_eq!(report.bounded_count, 12);
    }

    #[test]
    fn nu_property_on_training_scores() {
        // With nu = 0.1 and m = 500 the anomalous training fraction stays
        // near nu.
        let embeddings = blob(500, 8, 12);
        let model = fit(&embeddings, &FitOptions::default()).unwrap();
        let outliers = embeddings
            .iter()
            .filter(|e| anomaly_score(e, &model).unwrap() > 0.0)
            .count();
        let fraction = outliers as f64 / 500.0;
        assert!(
            (0.05..=0.15).contains(&fraction),
            "training outlier fraction {fraction} outside [0.05, 0.15]"
        );
        // Support-vector lower bound from the nu-property.
        assert!(model.alphas.len() as f64 >= 0.1 * 500.0 - 1.0);
    }

    #[test]
    fn solver_is_deterministic() {
        let embeddings = blob(100, 5, 21);
        let a = fit(&embeddings, &FitOptions::default()).unwrap();
        let b = fit(&embeddings, &FitOptions::default()).unwrap();
        assert_eq!(a.alphas, b.alphas);
        assert_eq!(a.rho, b.rho);
    }

    #[test]
    fn degenerate_inputs_rejected() {
        assert!(fit(&[vec![1.0]], &FitOptions::default()).is_err());
        let embeddings = vec![vec![0.0, 1.0], vec![1.0, 0.0]];
        assert!(fit(&embeddings, &FitOptions { nu: 1.5, ..FitOptions::default() }).is_err());
    }
}
