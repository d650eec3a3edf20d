use ndarray::Array2;

use super::TrainError;
use crate::config::AdamSettings;

impl Default for AdamSettings {
    /// lr 5e-4, betas (0.5, 0.9), eps 1e-6, constant learning rate.
    fn default() -> Self {
        Self {
            learning_rate: 5e-4,
            beta1: 0.5,
            beta2: 0.9,
            epsilon: 1e-6,
            noam: false,
        }
    }
}

/// Noam warmup used when the schedule is enabled.
pub const NOAM_WARMUP_STEPS: f64 = 4000.0;

/// `lr * warmup^0.5 * min(step * warmup^-1.5, step^-0.5)`.
pub fn noam_learning_rate(lr: f64, warmup: f64, step: u64) -> f64 {
    let step = step.max(1) as f64;
    lr * warmup.sqrt() * (step * warmup.powf(-1.5)).min(step.powf(-0.5))
}

/// Moment accumulators for a list of parameter matrices.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    pub settings: AdamSettings,
    pub warmup: f64,
    pub step: u64,
    first: Vec<Array2<f64>>,
    second: Vec<Array2<f64>>,
}

impl OptimizerState {
    pub fn new(settings: AdamSettings, shapes: &[(usize, usize)]) -> Self {
        Self {
            settings,
            warmup: NOAM_WARMUP_STEPS,
            step: 0,
            first: shapes.iter().map(|&s| Array2::zeros(s)).collect(),
            second: shapes.iter().map(|&s| Array2::zeros(s)).collect(),
        }
    }

    pub fn first_moments(&self) -> &[Array2<f64>] {
        &self.first
    }

    pub fn second_moments(&self) -> &[Array2<f64>] {
        &self.second
    }

    pub fn current_learning_rate(&self) -> f64 {
        if self.settings.noam {
            noam_learning_rate(self.settings.learning_rate, self.warmup, self.step)
        } else {
            self.settings.learning_rate
        }
    }
}

/// One bias-corrected Adam update over matching lists of parameters and
/// gradients.
pub fn adam_step(
    params: Vec<&mut Array2<f64>>,
    grads: &[&Array2<f64>],
    state: &mut OptimizerState,
) -> Result<(), TrainError> {
    if params.len() != grads.len() || params.len() != state.first.len() {
        return Err(TrainError::ShapeMismatch(format!(
            "{} parameters, {} gradients, {} moment slots",
            params.len(),
            grads.len(),
            state.first.len()
        )));
    }
    for (i, (p, g)) in params.iter().zip(grads).enumerate() {
        if p.dim() != g.dim() || p.dim() != state.first[i].dim() {
            return Err(TrainError::ShapeMismatch(format!(
                "parameter {i}: {:?} vs gradient {:?} vs moments {:?}",
                p.dim(),
                g.dim(),
                state.first[i].dim()
            )));
        }
    }
    state.step += 1;
    let AdamSettings {
        beta1,
        beta2,
        epsilon,
        ..
    } = state.settings;
    let lr = state.current_learning_rate();
    let bias1 = 1.0 - beta1.powi(state.step as i32);
    let bias2 = 1.0 - beta2.powi(state.step as i32);
    for (i, (p, g)) in params.into_iter().zip(grads).enumerate() {
        let m = &mut state.first[i];
        let v = &mut state.second[i];
        ndarray::Zip::from(p)
            .and(&**g)
            .and(m)
            .and(v)
            .for_each(|p, &g, m, v| {
                *m = beta1 * *m + (1.0 - beta1) * g;
                *v = beta2 * *v + (1.0 - beta2) * g * g;
                let m_hat = *m / bias1;
                let v_hat = *v / bias2;
                *p -= lr * m_hat / (v_hat.sqrt() + epsilon);
            });
    }
    Ok(())
}
