use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::{Batch, DisAEConfig, DisAEModel, LossBreakdown, ModelError};
use crate::data::{Dataset, SplitPlan, WeightedBatchSampler};
use crate::metrics::relative_reconstruction_error;
use crate::nn::{accuracy, argmax_rows, Adam, AdamConfig, LrSchedule, NnError};
use crate::rng::{derive_seed, seeded};

/// Which epoch's parameters a training run returns.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EpochSelection {
    /// Highest validation `mean task accuracy - relative reconstruction error`.
    #[default]
    Proxy,
    /// Parameters after the final epoch.
    Last,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub lr: f64,
    /// Sample-weighted mean of the batch losses.
    pub train: LossBreakdown,
    pub val: Option<LossBreakdown>,
    pub val_accuracy: Option<f64>,
    pub val_reconstruction: Option<f64>,
    pub proxy: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub epochs: Vec<EpochRecord>,
    /// Index into `epochs` of the returned parameters.
    pub best_epoch: usize,
}

#[derive(Debug, Clone)]
pub struct TrainedModel {
    pub model: DisAEModel,
    pub history: TrainHistory,
}

/// Mean task accuracy and relative reconstruction error of `model` on `batch`.
fn validation_terms(model: &DisAEModel, batch: &Batch) -> Result<(f64, f64), ModelError> {
    let z = model.encode(&batch.x)?;
    let x_hat = model.decode(&z)?;
    let rec = relative_reconstruction_error(&batch.x, &x_hat).unwrap_or(f64::INFINITY);
    let logits = model.task_logits(&z)?;
    let acc = if logits.is_empty() {
        0.0
    } else {
        logits
            .iter()
            .zip(&batch.tasks)
            .map(|(l, y)| accuracy(&argmax_rows(l), y))
            .sum::<f64>()
            / logits.len() as f64
    };
    Ok((acc, rec))
}

fn diverged(epoch: usize, history: &TrainHistory, what: &str) -> ModelError {
    let detail = match history.epochs.last() {
        Some(r) => format!(
            "{what}; last finite epoch {} had train loss {:.6} (reconstruction {:.6})",
            r.epoch, r.train.total, r.train.reconstruction
        ),
        None => format!("{what} during the first epoch"),
    };
    ModelError::Diverged { epoch, detail }
}

/// Trains a model on `fit`, using `val` (if given) for the learning-rate
/// schedule and epoch selection. Inputs are expected to be normalised.
/// Continuous domain bins are fitted on `fit`.
pub fn train_model(fit: &Dataset, val: Option<&Dataset>, config: &DisAEConfig) -> Result<TrainedModel, ModelError> {
    let mut model = DisAEModel::new(config.clone())?;
    model.fit_domain_bins(fit)?;
    let train_batch = model.batch_from(fit)?;
    let val_batch = val.map(|v| model.batch_from(v)).transpose()?;
    let n = train_batch.len();
    if n == 0 {
        return Err(ModelError::Config("training split is empty".into()));
    }

    let mut opt = Adam::new(AdamConfig {
        lr: config.lr,
        weight_decay: config.l2,
        ..AdamConfig::default()
    });
    let mut schedule = LrSchedule::new(config.lr, config.plateau)?;
    let mut sampler = match config.balance_task {
        Some(t) => Some(WeightedBatchSampler::new(fit, t, config.batch_size, derive_seed(config.seed, &[2]))?),
        None => None,
    };
    let mut shuffle_rng = seeded(derive_seed(config.seed, &[3]));
    let mut order: Vec<usize> = (0..n).collect();
    let n_batches = n.div_ceil(config.batch_size);

    let mut history = TrainHistory::default();
    let mut best: Option<(f64, DisAEModel)> = None;

    for epoch in 0..config.max_epochs {
        let batches: Vec<Vec<usize>> = match sampler.as_mut() {
            Some(s) => (0..n_batches).map(|_| s.next_batch()).collect(),
            None => {
                order.shuffle(&mut shuffle_rng);
                order.chunks(config.batch_size).map(<[usize]>::to_vec).collect()
            }
        };
        let mut mean = LossBreakdown::default();
        let mut seen = 0usize;
        for idx in &batches {
            let b = train_batch.select(idx);
            let (loss, grads) = model.loss_and_grads(&b)?;
            if !loss.is_finite() {
                return Err(diverged(epoch, &history, "non-finite training loss"));
            }
            let mut blocks = model.param_blocks(&grads);
            match opt.step(&mut blocks) {
                Ok(()) => {}
                Err(NnError::NonFiniteGradient { block }) => {
                    return Err(diverged(epoch, &history, &format!("non-finite gradient in {block}")))
                }
                Err(e) => return Err(e.into()),
            }
            mean.add_scaled(&loss, idx.len() as f64);
            seen += idx.len();
        }
        let scale = 1.0 / seen as f64;
        let mut train = LossBreakdown::default();
        train.add_scaled(&mean, scale);
        if !model.is_finite() {
            return Err(diverged(epoch, &history, "non-finite parameters"));
        }

        let lr = opt.lr();
        let mut record = EpochRecord {
            epoch,
            lr,
            train,
            val: None,
            val_accuracy: None,
            val_reconstruction: None,
            proxy: None,
        };
        let plateau_metric = match &val_batch {
            Some(vb) => {
                let vl = model.compute_loss(vb)?;
                let (acc, rec) = validation_terms(&model, vb)?;
                let proxy = acc - rec;
                record.proxy = Some(proxy);
                record.val_accuracy = Some(acc);
                record.val_reconstruction = Some(rec);
                let metric = vl.encoder_objective();
                record.val = Some(vl);
                metric
            }
            None => record.train.encoder_objective(),
        };
        if !plateau_metric.is_finite() {
            return Err(diverged(epoch, &history, "non-finite validation loss"));
        }
        opt.set_lr(schedule.update(plateau_metric));

        if config.selection == EpochSelection::Proxy {
            if let Some(p) = record.proxy {
                if best.as_ref().is_none_or(|(bp, _)| p > *bp) {
                    best = Some((p, model.clone()));
                    history.best_epoch = history.epochs.len();
                }
            }
        }
        history.epochs.push(record);
    }

    let model = match best {
        Some((_, m)) => m,
        None => {
            history.best_epoch = history.epochs.len().saturating_sub(1);
            model
        }
    };
    Ok(TrainedModel { model, history })
}

/// Trains one model per fold of `plan`, each on the fold's fit part and
/// validated on its validation part. Every fold uses a seed derived from
/// `config.seed` and the fold index.
pub fn train(dataset: &Dataset, plan: &SplitPlan, config: &DisAEConfig) -> Result<Vec<TrainedModel>, ModelError> {
    if plan.n_samples() != dataset.n_samples() {
        return Err(ModelError::Config(format!(
            "split plan covers {} samples, dataset has {}",
            plan.n_samples(),
            dataset.n_samples()
        )));
    }
    (0..plan.k)
        .map(|f| {
            let (fit, val) = plan.fit_validation(f);
            let cfg = DisAEConfig {
                seed: derive_seed(config.seed, &[f as u64]),
                ..config.clone()
            };
            train_model(&dataset.subset(&fit), Some(&dataset.subset(&val)), &cfg)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{DomainColumn, DomainSpec, TaskSpec};
    use crate::nn::PlateauConfig;
    use ndarray::Array2;
    use rand::Rng as _;

    fn toy(n: usize, seed: u64) -> Dataset {
        let mut rng = seeded(seed);
        let mut x = Array2::zeros((n, 4));
        let mut y = Vec::with_capacity(n);
        let mut d = Vec::with_capacity(n);
        for i in 0..n {
            let class = i % 2;
            let site = (i / 2) % 2;
            for j in 0..4 {
                x[[i, j]] = rng.random_range(-1.0..1.0) + if j == 0 { class as f64 * 2.0 - 1.0 } else { 0.0 };
            }
            x[[i, 3]] += site as f64;
            y.push(class);
            d.push(site);
        }
        Dataset::new(
            x,
            (0..4).map(|j| format!("f{j}")).collect(),
            vec![y],
            vec![DomainColumn::Categorical(d)],
            vec![TaskSpec::new("y", 2)],
            vec![DomainSpec::categorical("site", 2)],
        )
        .unwrap()
    }

    fn cfg(ds: &Dataset) -> DisAEConfig {
        DisAEConfig {
            encoder_hidden: vec![8],
            latent_dim: 3,
            max_epochs: 8,
            batch_size: 16,
            lr: 5e-3,
            ..DisAEConfig::for_dataset(ds)
        }
    }

    #[test]
    fn training_reduces_loss_and_is_deterministic() {
        let ds = toy(200, 1);
        let val = toy(60, 2);
        let c = cfg(&ds);
        let a = train_model(&ds, Some(&val), &c).unwrap();
        let b = train_model(&ds, Some(&val), &c).unwrap();
        assert_eq!(a.model.flat_params(), b.model.flat_params());
        let h = &a.history.epochs;
        assert_eq!(h.len(), 8);
        assert!(h.last().unwrap().train.reconstruction < h[0].train.reconstruction);
        assert!(a.history.best_epoch < h.len());
        let best_proxy = h[a.history.best_epoch].proxy.unwrap();
        assert!(h.iter().all(|r| r.proxy.unwrap() <= best_proxy));
    }

    #[test]
    fn balanced_batches_and_last_selection() {
        let ds = toy(120, 3);
        let c = DisAEConfig {
            balance_task: Some(0),
            selection: EpochSelection::Last,
            max_epochs: 3,
            ..cfg(&ds)
        };
        let t = train_model(&ds, None, &c).unwrap();
        assert_eq!(t.history.best_epoch, 2);
        assert!(t.history.epochs.iter().all(|r| r.val.is_none()));
    }

    #[test]
    fn huge_learning_rate_diverges_with_context() {
        let ds = toy(100, 4);
        let c = DisAEConfig {
            lr: 1e200,
            max_epochs: 20,
            plateau: PlateauConfig {
                min_lr: 1e200,
                ..PlateauConfig::default()
            },
            ..cfg(&ds)
        };
        match train_model(&ds, None, &c) {
            Err(ModelError::Diverged { detail, .. }) => assert!(!detail.is_empty()),
            other => panic!("expected divergence, got {:?}", other.map(|t| t.history.epochs.len())),
        }
    }

    #[test]
    fn per_fold_training() {
        let ds = toy(100, 5);
        let plan = crate::data::make_folds(&ds, 2, 0).unwrap();
        let c = DisAEConfig { max_epochs: 2, ..cfg(&ds) };
        let models = train(&ds, &plan, &c).unwrap();
        assert_eq!(models.len(), 2);
        assert_ne!(models[0].model.flat_params(), models[1].model.flat_params());
    }
}
