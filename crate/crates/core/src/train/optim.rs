use serde::{Deserialize, Serialize};

use crate::autodiff::Tensor;

use super::TrainError;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    /// Decoupled weight decay.
    #[default]
    AdamW,
    /// Weight decay folded into the gradient as an L2 term.
    Adam,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 0.005,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.01,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct OptimizerState {
    pub kind: OptimizerKind,
    pub config: AdamConfig,
    pub step: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl OptimizerState {
    pub fn new(kind: OptimizerKind, config: AdamConfig, params: &[Tensor]) -> Result<Self, TrainError> {
        if !(config.lr > 0.0) || !config.lr.is_finite() {
            return Err(TrainError::InvalidConfig(format!("learning rate {} must be positive", config.lr)));
        }
        let zeros: Vec<Vec<f64>> = params.iter().map(|p| vec![0.0; p.numel()]).collect();
        Ok(Self {
            kind,
            config,
            step: 0,
            m: zeros.clone(),
            v: zeros,
        })
    }

    pub fn lr(&self) -> f64 {
        self.config.lr
    }

    pub fn set_lr(&mut self, lr: f64) {
        self.config.lr = lr;
    }

    pub fn first_moments(&self) -> &[Vec<f64>] {
        &self.m
    }

    pub fn second_moments(&self) -> &[Vec<f64>] {
        &self.v
    }

    /// One bias-corrected update. Gradients are checked before any parameter
    /// is touched, so a non-finite gradient leaves everything unchanged.
    pub fn step(&mut self, params: &mut [Tensor], names: &[String], grads: &[Tensor]) -> Result<(), TrainError> {
        if params.len() != grads.len() || params.len() != self.m.len() {
            return Err(TrainError::InvalidConfig(format!(
                "{} parameters, {} gradients, {} moment slots",
                params.len(),
                grads.len(),
                self.m.len()
            )));
        }
        for (i, (p, g)) in params.iter().zip(grads).enumerate() {
            if p.shape() != g.shape() {
                return Err(TrainError::ShapeMismatch {
                    pred: p.shape().to_vec(),
                    labels: g.shape().to_vec(),
                });
            }
            if !g.is_finite() {
                return Err(TrainError::NonFiniteGradient {
                    name: names.get(i).cloned().unwrap_or_else(|| format!("#{i}")),
                });
            }
        }
        self.step += 1;
        let AdamConfig {
            lr,
            beta1,
            beta2,
            eps,
            weight_decay,
        } = self.config;
        let t = self.step as i32;
        let c1 = 1.0 - beta1.powi(t);
        let c2 = 1.0 - beta2.powi(t);
        for ((p, g), (m, v)) in params.iter_mut().zip(grads).zip(self.m.iter_mut().zip(self.v.iter_mut())) {
            for (j, x) in p.data_mut().iter_mut().enumerate() {
                let mut grad = g.data()[j];
                match self.kind {
                    OptimizerKind::AdamW => {
                        if weight_decay != 0.0 {
                            *x -= lr * weight_decay * *x;
                        }
                    }
                    OptimizerKind::Adam => {
                        if weight_decay != 0.0 {
                            grad += weight_decay * *x;
                        }
                    }
                }
                m[j] = beta1 * m[j] + (1.0 - beta1) * grad;
                v[j] = beta2 * v[j] + (1.0 - beta2) * grad * grad;
                let m_hat = m[j] / c1;
                let v_hat = v[j] / c2;
                *x -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(())
    }
}
