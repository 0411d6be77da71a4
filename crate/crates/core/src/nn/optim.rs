use serde::{Deserialize, Serialize};

use super::NnError;

/// A named, flat view of one parameter tensor and its gradient.
pub struct ParamBlock<'a> {
    pub name: String,
    pub values: &'a mut [f64],
    pub grad: &'a [f64],
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Decoupled L2 coefficient: each step shrinks parameters by `lr * weight_decay`.
    pub weight_decay: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.0,
        }
    }
}

/// Adam with decoupled weight decay. Moments are keyed by block position,
/// so callers must pass blocks in the same order on every step.
#[derive(Debug, Clone)]
pub struct Adam {
    pub config: AdamConfig,
    step: u64,
    moments: Vec<(Vec<f64>, Vec<f64>)>,
}

impl Adam {
    pub fn new(config: AdamConfig) -> Self {
        Self {
            config,
            step: 0,
            moments: Vec::new(),
        }
    }

    pub fn lr(&self) -> f64 {
        self.config.lr
    }

    pub fn set_lr(&mut self, lr: f64) {
        self.config.lr = lr;
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    /// Applies one update to every block. Nothing is modified if any
    /// gradient is non-finite.
    pub fn step(&mut self, blocks: &mut [ParamBlock<'_>]) -> Result<(), NnError> {
        for b in blocks.iter() {
            if b.values.len() != b.grad.len() {
                return Err(NnError::Shape {
                    what: "gradient block",
                    expected: b.values.len(),
                    got: b.grad.len(),
                });
            }
            if b.grad.iter().any(|g| !g.is_finite()) {
                return Err(NnError::NonFiniteGradient { block: b.name.clone() });
            }
        }
        if self.moments.is_empty() {
            self.moments = blocks
                .iter()
                .map(|b| (vec![0.0; b.values.len()], vec![0.0; b.values.len()]))
                .collect();
        } else if self.moments.len() != blocks.len()
            || self.moments.iter().zip(blocks.iter()).any(|(m, b)| m.0.len() != b.values.len())
        {
            return Err(NnError::InvalidConfig("parameter blocks changed between steps".into()));
        }
        self.step += 1;
        let AdamConfig {
            lr,
            beta1,
            beta2,
            eps,
            weight_decay,
        } = self.config;
        let bc1 = 1.0 - beta1.powi(self.step as i32);
        let bc2 = 1.0 - beta2.powi(self.step as i32);
        for (b, (m, v)) in blocks.iter_mut().zip(self.moments.iter_mut()) {
            for i in 0..b.values.len() {
                let g = b.grad[i];
                m[i] = beta1 * m[i] + (1.0 - beta1) * g;
                v[i] = beta2 * v[i] + (1.0 - beta2) * g * g;
                let update = (m[i] / bc1) / ((v[i] / bc2).sqrt() + eps);
                b.values[i] -= lr * (update + weight_decay * b.values[i]);
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlateauConfig {
    /// Epochs without improvement before the rate is reduced.
    pub patience: usize,
    pub factor: f64,
    pub min_lr: f64,
    /// Minimum decrease that counts as an improvement.
    pub threshold: f64,
}

impl Default for PlateauConfig {
    fn default() -> Self {
        Self {
            patience: 10,
            factor: 0.5,
            min_lr: 1e-5,
            threshold: 1e-6,
        }
    }
}

/// Reduce-on-plateau learning-rate schedule driven by validation loss.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LrSchedule {
    pub config: PlateauConfig,
    lr: f64,
    best: f64,
    bad_epochs: usize,
}

impl LrSchedule {
    pub fn new(initial_lr: f64, config: PlateauConfig) -> Result<Self, NnError> {
        if !(config.factor > 0.0 && config.factor < 1.0) {
            return Err(NnError::InvalidConfig(format!(
                "plateau factor must lie in (0, 1), got {}",
                config.factor
            )));
        }
        Ok(Self {
            config,
            lr: initial_lr,
            best: f64::INFINITY,
            bad_epochs: 0,
        })
    }

    pub fn lr(&self) -> f64 {
        self.lr
    }

    /// Records one epoch's validation loss and returns the rate to use next.
    pub fn update(&mut self, val_loss: f64) -> f64 {
        if val_loss < self.best - self.config.threshold {
            self.best = val_loss;
            self.bad_epochs = 0;
        } else {
            self.bad_epochs += 1;
            if self.bad_epochs >= self.config.patience {
                self.lr = (self.lr * self.config.factor).max(self.config.min_lr);
                self.bad_epochs = 0;
            }
        }
        self.lr
    }
}
