use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::{model_variation, LabelSet, MetricError, VariationOptions};
use crate::data::Dataset;
use crate::model::DisAEModel;
use crate::nn::{accuracy, argmax_rows};

/// The three selection-score terms and their combination
/// `score = accuracy - variation - reconstruction`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreReport {
    pub task_accuracies: Vec<f64>,
    /// Mean task accuracy.
    pub accuracy: f64,
    /// `V^sup(latent) / V^sup(raw)`.
    pub variation: f64,
    /// `sqrt(MSE(X, X~) / E(X^2))`.
    pub reconstruction: f64,
    pub score: f64,
}

impl ScoreReport {
    pub fn from_terms(task_accuracies: Vec<f64>, variation: f64, reconstruction: f64) -> Self {
        let accuracy = if task_accuracies.is_empty() {
            0.0
        } else {
            task_accuracies.iter().sum::<f64>() / task_accuracies.len() as f64
        };
        Self {
            score: accuracy - variation - reconstruction,
            task_accuracies,
            accuracy,
            variation,
            reconstruction,
        }
    }

    /// Re-derives the combined score from the stored terms.
    pub fn recomputed_score(&self) -> f64 {
        self.accuracy - self.variation - self.reconstruction
    }
}

/// `sqrt(MSE(x, x_hat) / mean(x^2))`, both means taken over every entry.
pub fn relative_reconstruction_error(x: &Array2<f64>, x_hat: &Array2<f64>) -> Result<f64, MetricError> {
    if x.dim() != x_hat.dim() {
        return Err(MetricError::Shape {
            what: "reconstruction",
            expected: x.len(),
            got: x_hat.len(),
        });
    }
    let n = x.len().max(1) as f64;
    let mse = x.iter().zip(x_hat).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / n;
    let energy = x.iter().map(|a| a * a).sum::<f64>() / n;
    if !(energy > 0.0) {
        return Err(MetricError::InvalidArgument("input has zero energy".into()));
    }
    Ok((mse / energy).sqrt())
}

/// Scores `model` on a (normalised) evaluation split. Task accuracies come
/// from the model's task heads unless `external_accuracies` is given (used
/// for models without heads, e.g. a probe on a vanilla autoencoder).
/// `raw_vsup` must be computed on the same split with the same options.
pub fn selection_score(
    model: &DisAEModel,
    eval: &Dataset,
    labels: &LabelSet,
    opts: &VariationOptions,
    raw_vsup: f64,
    external_accuracies: Option<&[f64]>,
) -> Result<ScoreReport, MetricError> {
    if !(raw_vsup > 0.0) {
        return Err(MetricError::ZeroRawVariation);
    }
    let x = eval.features();
    let z = model.encode(x)?;
    let x_hat = model.decode(&z)?;
    let accs = match external_accuracies {
        Some(a) => a.to_vec(),
        None => {
            let logits = model.task_logits(&z)?;
            logits
                .iter()
                .zip(&labels.tasks)
                .map(|(l, y)| accuracy(&argmax_rows(l), y))
                .collect()
        }
    };
    let vsup = model_variation(&z, labels, opts)?.v_sup;
    Ok(ScoreReport::from_terms(
        accs,
        vsup / raw_vsup,
        relative_reconstruction_error(x, &x_hat)?,
    ))
}
