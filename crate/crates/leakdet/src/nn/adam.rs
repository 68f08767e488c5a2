//! Adaptive-moment stochastic gradient optimizer.

use super::Tensor3;
use crate::{Error, Result};

/// Update hyperparameters. The default step size suits small deterministic
/// problems; the autoencoder training config sets its own rate.
#[derive(Debug, Clone)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig { learning_rate: 0.01, beta1: 0.9, beta2: 0.999, epsilon: 1e-8 }
    }
}

/// First/second moment accumulators, one pair per parameter tensor.
#[derive(Debug, Clone)]
pub struct AdamState {
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    step: u64,
}

impl AdamState {
    pub fn for_params(params: &[&Tensor3]) -> Self {
        AdamState {
            m: params.iter().map(|p| vec![0.0; p.numel()]).collect(),
            v: params.iter().map(|p| vec![0.0; p.numel()]).collect(),
            step: 0,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }
}

/// One update:
/// `m <- b1 m + (1-b1) g`, `v <- b2 v + (1-b2) g^2`,
/// `p <- p - lr * m_hat / (sqrt(v_hat) + eps)` with bias-corrected moments.
///
/// Rejects non-finite gradients so training aborts with diagnostics instead
/// of silently corrupting parameters.
pub fn adam_step(
    params: &mut [&mut Tensor3],
    grads: &[&Tensor3],
    state: &mut AdamState,
    cfg: &AdamConfig,
) -> Result<()> {
    if params.len() != grads.len() || params.len() != state.m.len() {
        return Err(Error::Shape(format!(
            "optimizer got {} params, {} grads, state for {}",
            params.len(),
            grads.len(),
            state.m.len()
        )));
    }
    for (i, (p, g)) in params.iter().zip(grads).enumerate() {
        if p.numel() != g.numel() {
            return Err(Error::Shape(format!("param {i}: size {} vs grad size {}", p.numel(), g.numel())));
        }
        if !g.is_finite() {
            return Err(Error::Numerical(format!(
                "non-finite gradient in parameter {i} at optimizer step {}",
                state.step + 1
            )));
        }
    }
    state.step += 1;
    let t = state.step as i32;
    let bc1 = 1.0 - cfg.beta1.powi(t);
    let bc2 = 1.0 - cfg.beta2.powi(t);
    for ((p, g), (m, v)) in params
        .iter_mut()
        .zip(grads)
        .zip(state.m.iter_mut().zip(state.v.iter_mut()))
    {
        for (i, pv) in p.data_mut().iter_mut().enumerate() {
            let gv = g.data()[i];
            m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * gv;
            v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * gv * gv;
            let m_hat = m[i] / bc1;
            let v_hat = v[i] / bc2;
            *pv -= cfg.learning_rate * m_hat / (v_hat.sqrt() + cfg.epsilon);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    /// f(w) = w^T w; gradient 2w. At the default rate the iterate reaches
    /// f < 1e-6 within 500 steps (an independent simulation of the update
    /// recurrence puts the crossing near step 276).
    #[test]
    fn quadratic_bowl_converges_at_default_rate() {
        let mut w = Tensor3::new(1, 1, 2, vec![1.0, 1.0]).unwrap();
        let mut state = AdamState::for_params(&[&w]);
        let cfg = AdamConfig::default();
        let mut f = f64::INFINITY;
        for _ in 0..500 {
            let g = Tensor3::new(1, 1, 2, w.data().iter().map(|v| 2.0 * v).collect()).unwrap();
            adam_step(&mut [&mut w], &[&g], &mut state, &cfg).unwrap();
            f = w.data().iter().map(|v| v * v).sum();
            if f < 1e-6 {
                break;
            }
        }
        assert!(f < 1e-6, "bowl objective {f} after 500 steps");
        assert!(state.step_count() <= 500);
    }

    #[test]
    fn zero_gradient_leaves_parameters_unchanged() {
        let mut w = Tensor3::new(1, 1, 3, vec![0.5, -2.0, 3.0]).unwrap();
        let before = w.clone();
        let g = Tensor3::zeros(1, 1, 3);
        let mut state = AdamState::for_params(&[&w]);
        adam_step(&mut [&mut w], &[&g], &mut state, &AdamConfig::default()).unwrap();
        assert_eq!(w, before);
    }

    #[test]
    fn identical_state_gives_identical_trajectories() {
        let run = || {
            let mut w = Tensor3::new(1, 1, 2, vec![0.3, -0.7]).unwrap();
            let mut state = AdamState::for_params(&[&w]);
            for _ in 0..50 {
                let g = Tensor3::new(1, 1, 2, w.data().iter().map(|v| 2.0 * v + 0.1).collect()).unwrap();
                adam_step(&mut [&mut w], &[&g], &mut state, &AdamConfig::default()).unwrap();
            }
            w
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn non_finite_gradient_aborts() {
        let mut w = Tensor3::zeros(1, 1, 2);
        let mut g = Tensor3::zeros(1, 1, 2);
        g.data_mut()[1] = f64::NAN;
        let mut state = AdamState::for_params(&[&w]);
        let err = adam_step(&mut [&mut w], &[&g], &mut state, &AdamConfig::default()).unwrap_err();
        assert!(matches!(err, Error::Numerical(_)));
    }
}
