use serde::{Deserialize, Serialize};

use super::network::{GradientTape, Network};
use crate::error::{check_len, Error, Result};

/// Hyperparameters of the adaptive moment estimation rule.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// Adam moment buffers for one network.
#[derive(Clone, Debug)]
pub struct OptimizerState {
    config: AdamConfig,
    step_count: u64,
    first_moment: Vec<f64>,
    second_moment: Vec<f64>,
}

impl OptimizerState {
    pub fn new(net: &Network, config: AdamConfig) -> Result<Self> {
        if !(config.learning_rate > 0.0)
            || !(0.0..1.0).contains(&config.beta1)
            || !(0.0..1.0).contains(&config.beta2)
            || !(config.epsilon > 0.0)
        {
            return Err(Error::InvalidParameter(format!(
                "invalid Adam configuration {config:?}"
            )));
        }
        let n = net.param_count();
        Ok(Self {
            config,
            step_count: 0,
            first_moment: vec![0.0; n],
            second_moment: vec![0.0; n],
        })
    }

    pub fn config(&self) -> &AdamConfig {
        &self.config
    }

    pub fn step_count(&self) -> u64 {
        self.step_count
    }

    pub fn set_learning_rate(&mut self, lr: f64) {
        self.config.learning_rate = lr;
    }

    /// Applies one bias-corrected update to `net` in place.
    pub fn step(&mut self, net: &mut Network, tape: &GradientTape) -> Result<()> {
        check_len("optimizer state", self.first_moment.len(), net.param_count())?;
        check_len("gradient tape layers", net.layers().len(), tape.layers.len())?;
        for (layer, grad) in net.layers().iter().zip(&tape.layers) {
            check_len("gradient tape weights", layer.weights().len(), grad.weights.len())?;
            check_len("gradient tape bias", layer.bias().len(), grad.bias.len())?;
        }
        self.step_count += 1;
        let AdamConfig {
            learning_rate,
            beta1,
            beta2,
            epsilon,
        } = self.config;
        let t = self.step_count as i32;
        let correction1 = 1.0 - beta1.powi(t);
        let correction2 = 1.0 - beta2.powi(t);
        let grads = tape.layers.iter().flat_map(|g| g.weights.iter().chain(g.bias.iter()));
        for (((p, g), m), v) in net
            .params_mut()
            .zip(grads)
            .zip(self.first_moment.iter_mut())
            .zip(self.second_moment.iter_mut())
        {
            *m = beta1 * *m + (1.0 - beta1) * g;
            *v = beta2 * *v + (1.0 - beta2) * g * g;
            let m_hat = *m / correction1;
            let v_hat = *v / correction2;
            *p -= learning_rate * m_hat / (v_hat.sqrt() + epsilon);
        }
        Ok(())
    }
}
