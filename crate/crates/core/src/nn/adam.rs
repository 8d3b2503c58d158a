use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use super::{Gradients, Mlp, NeuralError};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
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

/// Moment accumulators shaped like the network they optimize.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub config: AdamConfig,
    pub step: u64,
    pub m_weights: Vec<Array2<f64>>,
    pub v_weights: Vec<Array2<f64>>,
    pub m_biases: Vec<Array1<f64>>,
    pub v_biases: Vec<Array1<f64>>,
}

impl AdamState {
    pub fn new(net: &Mlp, config: AdamConfig) -> Self {
        let zeros_w: Vec<Array2<f64>> = net.weights.iter().map(|w| Array2::zeros(w.dim())).collect();
        let zeros_b: Vec<Array1<f64>> = net.biases.iter().map(|b| Array1::zeros(b.dim())).collect();
        Self {
            config,
            step: 0,
            m_weights: zeros_w.clone(),
            v_weights: zeros_w,
            m_biases: zeros_b.clone(),
            v_biases: zeros_b,
        }
    }

    /// One bias-corrected Adam step. Non-finite gradients are rejected before
    /// anything is modified.
    pub fn update(&mut self, net: &mut Mlp, grads: &Gradients) -> Result<(), NeuralError> {
        if !grads.is_finite() {
            return Err(NeuralError::NonFinite);
        }
        if grads.weights.len() != net.weights.len() {
            return Err(NeuralError::Shape("gradient layer count".into()));
        }
        self.step += 1;
        let AdamConfig {
            learning_rate,
            beta1,
            beta2,
            epsilon,
        } = self.config;
        let t = self.step as i32;
        let step_size = learning_rate / (1.0 - beta1.powi(t));
        let v_correction = 1.0 - beta2.powi(t);

        let apply = |param: &mut f64, g: f64, m: &mut f64, v: &mut f64| {
            *m = beta1 * *m + (1.0 - beta1) * g;
            *v = beta2 * *v + (1.0 - beta2) * g * g;
            *param -= step_size * *m / ((*v / v_correction).sqrt() + epsilon);
        };
        for l in 0..net.weights.len() {
            ndarray::Zip::from(&mut net.weights[l])
                .and(&grads.weights[l])
                .and(&mut self.m_weights[l])
                .and(&mut self.v_weights[l])
                .for_each(|p, &g, m, v| apply(p, g, m, v));
            ndarray::Zip::from(&mut net.biases[l])
                .and(&grads.biases[l])
                .and(&mut self.m_biases[l])
                .and(&mut self.v_biases[l])
                .for_each(|p, &g, m, v| apply(p, g, m, v));
        }
        Ok(())
    }
}
