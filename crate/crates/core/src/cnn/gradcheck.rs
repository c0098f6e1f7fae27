//! Finite-difference verification of the analytic gradient.

use rand::Rng;

use super::net::{self, activation_pattern, param_len, Workspace};
use super::{dropout_mask, CnnModel, PARAM_NAMES};
use crate::error::Result;
use crate::rng::rng_for;

#[derive(Debug, Clone)]
pub struct TensorReport {
    pub name: &'static str,
    pub checked: usize,
    pub max_rel_error: f64,
}

#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub tensors: Vec<TensorReport>,
    /// Coordinates skipped because a perturbation flipped a ReLU state or a
    /// max-pool winner, where the objective is not differentiable.
    pub skipped: usize,
}

impl GradCheckReport {
    pub fn checked(&self) -> usize {
        self.tensors.iter().map(|t| t.checked).sum()
    }

    pub fn max_rel_error(&self) -> f64 {
        self.tensors.iter().map(|t| t.max_rel_error).fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone)]
pub struct GradCheckConfig {
    pub per_tensor: usize,
    pub step: f64,
    pub beta: f64,
    pub weight_decay: f64,
    pub keep_prob: f64,
    /// Denominator floor of the relative error, so that coordinates whose
    /// gradient is essentially zero are compared in absolute terms.
    pub floor: f64,
    pub seed: u64,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        Self {
            per_tensor: 20,
            step: 1e-5,
            beta: 0.3,
            weight_decay: 5e-4,
            keep_prob: 0.99,
            floor: 1e-7,
            seed: 0,
        }
    }
}

fn patterns(model: &CnnModel, inputs: &[Vec<f64>], masks: &[Vec<f64>]) -> Vec<Vec<u32>> {
    let mut ws = Workspace::default();
    inputs
        .iter()
        .zip(masks)
        .map(|(x, m)| activation_pattern(&net::forward(model.params(), x, Some(m), &mut ws)))
        .collect()
}

/// Compares central differences with [`CnnModel::backward`] on `per_tensor`
/// random coordinates of every tensor, in training mode with one fixed
/// dropout mask per sample.
pub fn gradient_check(model: &CnnModel, inputs: &[Vec<f64>], labels: &[u8], cfg: &GradCheckConfig) -> Result<GradCheckReport> {
    let mut rng = rng_for(cfg.seed, 0);
    let masks: Vec<Vec<f64>> = inputs.iter().map(|_| dropout_mask(cfg.keep_prob, &mut rng)).collect();
    let analytic = model.backward(inputs, labels, cfg.beta, cfg.weight_decay, Some(&masks))?;
    let base = patterns(model, inputs, &masks);
    let mut work = model.clone();
    let mut skipped = 0;
    let mut tensors = Vec::new();

    for (t, name) in PARAM_NAMES.iter().enumerate() {
        let mut report = TensorReport {
            name,
            checked: 0,
            max_rel_error: 0.0,
        };
        let mut attempts = 0;
        while report.checked < cfg.per_tensor && attempts < cfg.per_tensor * 20 {
            attempts += 1;
            let j = rng.random_range(0..param_len(t));
            let orig = work.params()[t][j];
            work.params_mut()[t][j] = orig + cfg.step;
            let kink_plus = patterns(&work, inputs, &masks) != base;
            let f_plus = work.objective(inputs, labels, cfg.beta, cfg.weight_decay, Some(&masks))?;
            work.params_mut()[t][j] = orig - cfg.step;
            let kink_minus = patterns(&work, inputs, &masks) != base;
            let f_minus = work.objective(inputs, labels, cfg.beta, cfg.weight_decay, Some(&masks))?;
            work.params_mut()[t][j] = orig;
            if kink_plus || kink_minus {
                skipped += 1;
                continue;
            }
            let numeric = (f_plus - f_minus) / (2.0 * cfg.step);
            let a = analytic[t][j];
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(cfg.floor);
            report.max_rel_error = report.max_rel_error.max(rel);
            report.checked += 1;
        }
        tensors.push(report);
    }
    Ok(GradCheckReport { tensors, skipped })
}
