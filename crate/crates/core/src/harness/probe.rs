use ndarray::{Array2, Axis};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::HarnessError;
use crate::data::NormStats;
use crate::nn::{accuracy, argmax_rows, softmax_cross_entropy, Activation, Adam, AdamConfig, DenseNet};
use crate::rng::{derive_seed, seeded};

/// Human-readable description written next to every probe result.
pub const PROBE_NAME: &str = "dense-softmax probe (one relu hidden layer)";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProbeConfig {
    pub hidden: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub l2: f64,
    pub seed: u64,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        Self {
            hidden: 32,
            epochs: 30,
            batch_size: 128,
            lr: 3e-3,
            l2: 1e-4,
            seed: 0,
        }
    }
}

/// A trained classifier on a frozen representation. Inputs are standardised
/// with statistics of the training representation.
#[derive(Debug, Clone)]
pub struct Probe {
    pub net: DenseNet,
    pub norm: NormStats,
}

impl Probe {
    pub fn fit(z: &Array2<f64>, labels: &[usize], n_classes: usize, cfg: &ProbeConfig) -> Result<Self, HarnessError> {
        if z.nrows() != labels.len() || z.nrows() == 0 {
            return Err(HarnessError::Invalid(format!(
                "probe needs matching non-empty inputs ({} rows, {} labels)",
                z.nrows(),
                labels.len()
            )));
        }
        let mut seen = vec![false; n_classes];
        for &y in labels {
            if y >= n_classes {
                return Err(HarnessError::Invalid(format!("probe label {y} outside [0, {n_classes})")));
            }
            seen[y] = true;
        }
        if seen.iter().filter(|&&s| s).count() < 2 {
            return Err(HarnessError::SingleClass);
        }
        let norm = NormStats::fit(z);
        let x = norm.apply(z)?;
        let mut rng = seeded(derive_seed(cfg.seed, &[0]));
        let mut net = DenseNet::new(&[z.ncols(), cfg.hidden, n_classes], Activation::Linear, &mut rng)?;
        let mut opt = Adam::new(AdamConfig {
            lr: cfg.lr,
            weight_decay: cfg.l2,
            ..AdamConfig::default()
        });
        let mut order: Vec<usize> = (0..labels.len()).collect();
        for _ in 0..cfg.epochs {
            order.shuffle(&mut rng);
            for idx in order.chunks(cfg.batch_size.max(1)) {
                let xb = x.select(Axis(0), idx);
                let yb: Vec<usize> = idx.iter().map(|&i| labels[i]).collect();
                let cache = net.forward(&xb)?;
                let (_, g) = softmax_cross_entropy(cache.output(), &yb)?;
                let (grads, _) = net.backward(&cache, &g)?;
                let mut blocks = net.param_blocks("probe", &grads);
                opt.step(&mut blocks)?;
            }
        }
        Ok(Self { net, norm })
    }

    pub fn predict(&self, z: &Array2<f64>) -> Result<Vec<usize>, HarnessError> {
        Ok(argmax_rows(&self.net.predict(&self.norm.apply(z)?)?))
    }

    pub fn accuracy(&self, z: &Array2<f64>, labels: &[usize]) -> Result<f64, HarnessError> {
        Ok(accuracy(&self.predict(z)?, labels))
    }
}

/// Accuracy of a probe on one evaluation group.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeGroup {
    pub name: String,
    pub n: usize,
    pub accuracy: f64,
    /// Recall of each class (`NaN` if the class is absent from the group).
    pub per_class: Vec<f64>,
}

/// Row groups of a representation: one training group and any number of
/// named evaluation groups.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbeSplit {
    pub train: Vec<usize>,
    pub eval: Vec<(String, Vec<usize>)>,
}

/// Trains a probe on the `train` rows of `representation` and reports
/// overall and per-class accuracy on every evaluation group.
pub fn downstream_probe(
    representation: &Array2<f64>,
    labels: &[usize],
    n_classes: usize,
    split: &ProbeSplit,
    cfg: &ProbeConfig,
) -> Result<Vec<ProbeGroup>, HarnessError> {
    let train_y: Vec<usize> = split.train.iter().map(|&i| labels[i]).collect();
    let probe = Probe::fit(&representation.select(Axis(0), &split.train), &train_y, n_classes, cfg)?;
    split
        .eval
        .iter()
        .map(|(name, rows)| {
            let y: Vec<usize> = rows.iter().map(|&i| labels[i]).collect();
            let pred = if rows.is_empty() {
                Vec::new()
            } else {
                probe.predict(&representation.select(Axis(0), rows))?
            };
            let per_class = (0..n_classes)
                .map(|c| {
                    let (hit, tot) = pred
                        .iter()
                        .zip(&y)
                        .filter(|(_, &t)| t == c)
                        .fold((0usize, 0usize), |(h, t), (&p, _)| (h + usize::from(p == c), t + 1));
                    if tot == 0 {
                        f64::NAN
                    } else {
                        hit as f64 / tot as f64
                    }
                })
                .collect();
            Ok(ProbeGroup {
                name: name.clone(),
                n: rows.len(),
                accuracy: if rows.is_empty() { f64::NAN } else { accuracy(&pred, &y) },
                per_class,
            })
        })
        .collect()
}
