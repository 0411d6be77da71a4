//! Minimal dense-network engine: relu/linear layers, MSE and softmax
//! cross-entropy, Adam with decoupled weight decay, a plateau LR schedule,
//! and the gradient-reversal layer.

mod dense;
mod loss;
mod optim;

use ndarray::Array2;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use dense::{Activation, Dense, DenseNet, ForwardCache, LayerGrads, NetGrads};
pub use loss::{accuracy, argmax_rows, mse, softmax, softmax_cross_entropy};
pub use optim::{Adam, AdamConfig, LrSchedule, ParamBlock, PlateauConfig};

#[derive(Debug, Error)]
pub enum NnError {
    #[error("shape mismatch in {what}: expected {expected}, got {got}")]
    Shape {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("forward cache does not belong to the current parameters")]
    StaleCache,
    #[error("label {label} outside [0, {n_classes})")]
    LabelOutOfRange { label: usize, n_classes: usize },
    #[error("non-finite gradient in parameter block `{block}`")]
    NonFiniteGradient { block: String },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}

/// Identity on the way forward; scales gradients by `-lambda` on the way back.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GradReversal {
    pub lambda: f64,
}

impl GradReversal {
    pub fn new(lambda: f64) -> Result<Self, NnError> {
        if !(lambda >= 0.0 && lambda.is_finite()) {
            return Err(NnError::InvalidConfig(format!("lambda must be >= 0, got {lambda}")));
        }
        Ok(Self { lambda })
    }

    pub fn forward<'a>(&self, x: &'a Array2<f64>) -> &'a Array2<f64> {
        x
    }

    pub fn backward(&self, grad: &Array2<f64>) -> Array2<f64> {
        grad_reversal_backward(grad, self.lambda)
    }
}

pub fn grad_reversal_backward(grad: &Array2<f64>, lambda: f64) -> Array2<f64> {
    grad.mapv(|g| -lambda * g)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn reversal_scales_by_minus_lambda() {
        let g = array![[2.0, -4.0]];
        assert_eq!(grad_reversal_backward(&g, 0.5), array![[-1.0, 2.0]]);
        assert!(grad_reversal_backward(&g, 0.0).iter().all(|&v| v == 0.0));
        assert_eq!(grad_reversal_backward(&g, 1.0), array![[-2.0, 4.0]]);
    }

    #[test]
    fn reversal_forward_is_identity() {
        let r = GradReversal::new(3.0).unwrap();
        let x = array![[1.5, -0.25]];
        assert_eq!(r.forward(&x), &x);
        assert!(GradReversal::new(-1.0).is_err());
    }
}
