use serde::{Deserialize, Serialize};

use super::schedule::{PlateauSchedule, ScheduleConfig};
use crate::error::{Error, Result};
use crate::model::ModelParams;
use crate::numerics::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// Adam moments plus the learning-rate schedule that sets the step size.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OptimizerState {
    pub first_moments: Vec<Tensor>,
    pub second_moments: Vec<Tensor>,
    /// Adam steps taken.
    pub step: u64,
    pub schedule: PlateauSchedule,
}

impl OptimizerState {
    pub fn new(params: &ModelParams, schedule: &ScheduleConfig) -> Self {
        let zeros: Vec<Tensor> = params
            .tensors()
            .iter()
            .map(|t| Tensor::zeros(t.rows(), t.cols()))
            .collect();
        Self {
            first_moments: zeros.clone(),
            second_moments: zeros,
            step: 0,
            schedule: PlateauSchedule::new(schedule),
        }
    }

    pub fn lr(&self) -> f64 {
        self.schedule.lr
    }

    /// Checks that the moments fit `params`.
    pub fn check_against(&self, params: &ModelParams) -> Result<()> {
        let n = params.tensors().len();
        if self.first_moments.len() != n || self.second_moments.len() != n {
            return Err(Error::Validation(format!(
                "optimizer holds {} moment arrays, model has {n} parameters",
                self.first_moments.len()
            )));
        }
        for (i, t) in params.tensors().iter().enumerate() {
            if self.first_moments[i].shape() != t.shape() || self.second_moments[i].shape() != t.shape() {
                return Err(Error::Validation(format!(
                    "optimizer moments for {} have the wrong shape",
                    params.layout().names[i]
                )));
            }
        }
        Ok(())
    }
}

/// One bias-corrected Adam update at the schedule's current learning rate.
pub fn adam_step(params: &mut ModelParams, grads: &[Tensor], state: &mut OptimizerState, config: &AdamConfig) -> Result<()> {
    state.check_against(params)?;
    if grads.len() != params.tensors().len() {
        return Err(Error::shape("adam_step", &[params.tensors().len()], &[grads.len()]));
    }
    for (i, g) in grads.iter().enumerate() {
        let name = &params.layout().names[i];
        if g.shape() != params.get(i).shape() {
            return Err(Error::Validation(format!("gradient for {name} has the wrong shape")));
        }
        if !g.is_finite() {
            return Err(Error::Training(format!("non-finite gradient for parameter {name}")));
        }
    }
    state.step += 1;
    let t = state.step.min(i32::MAX as u64) as i32;
    let (b1, b2) = (config.beta1, config.beta2);
    let c1 = 1.0 - b1.powi(t);
    let c2 = 1.0 - b2.powi(t);
    let lr = state.schedule.lr;
    for (i, g) in grads.iter().enumerate() {
        let m = state.first_moments[i].data_mut();
        let v = state.second_moments[i].data_mut();
        let p = params.get_mut(i).data_mut();
        for k in 0..p.len() {
            let gk = g.data()[k];
            m[k] = b1 * m[k] + (1.0 - b1) * gk;
            v[k] = b2 * v[k] + (1.0 - b2) * gk * gk;
            let m_hat = m[k] / c1;
            let v_hat = v[k] / c2;
            p[k] -= lr * m_hat / (v_hat.sqrt() + config.epsilon);
        }
    }
    Ok(())
}
