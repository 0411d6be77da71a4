//! Disentangled autoencoder: encoder, mirrored decoder, task heads, and
//! domain heads behind a gradient-reversal layer, trained jointly with a
//! single optimizer so that the encoder descends on reconstruction and task
//! losses while ascending on the domain losses.

mod checkpoint;
mod train;

use ndarray::{Array2, Axis};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{BinEdges, DataError, Dataset, DomainColumn, NormStats};
use crate::nn::{
    mse, softmax_cross_entropy, Activation, DenseNet, GradReversal, NetGrads, NnError, ParamBlock, PlateauConfig,
};
use crate::rng::seeded;

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use train::{train, train_model, EpochRecord, EpochSelection, TrainHistory, TrainedModel};

#[derive(Debug, Error)]
pub enum ModelError {
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error("invalid model configuration: {0}")]
    Config(String),
    #[error("missing label column: {0}")]
    MissingLabels(String),
    #[error("training diverged at epoch {epoch}: {detail}")]
    Diverged { epoch: usize, detail: String },
    #[error("checkpoint i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("unsupported checkpoint version {found} (this build reads version {expected})")]
    UnsupportedVersion { found: u32, expected: u32 },
    #[error("corrupt checkpoint: {0}")]
    Corrupt(String),
}

fn default_head_hidden() -> Option<usize> {
    None
}

/// Architecture, loss weights, and training hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DisAEConfig {
    pub input_dim: usize,
    /// Hidden widths of the encoder; the decoder mirrors them.
    pub encoder_hidden: Vec<usize>,
    pub latent_dim: usize,
    /// Hidden width of the task heads; defaults to `latent_dim`.
    #[serde(default = "default_head_hidden")]
    pub head_hidden: Option<usize>,
    /// Hidden width of the domain heads; defaults to the task head width.
    #[serde(default = "default_head_hidden")]
    pub domain_head_hidden: Option<usize>,
    /// Output width of each task head.
    pub task_classes: Vec<usize>,
    /// Output width of each domain head.
    pub domain_classes: Vec<usize>,
    pub alpha: f64,
    pub beta: f64,
    pub lambda: f64,
    pub l2: f64,
    pub lr: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub seed: u64,
    /// Task whose classes are balanced in every batch, if any.
    #[serde(default)]
    pub balance_task: Option<usize>,
    #[serde(default)]
    pub plateau: PlateauConfig,
    #[serde(default)]
    pub selection: EpochSelection,
}

impl DisAEConfig {
    /// Default architecture sized for `dataset`: one hidden layer of 32
    /// units, a 12-dimensional latent space, and one head per task/domain.
    /// Domain heads are wider than task heads; a narrow adversary is easily
    /// fooled without the domain information leaving the latent space.
    pub fn for_dataset(dataset: &Dataset) -> Self {
        Self {
            input_dim: dataset.n_features(),
            encoder_hidden: vec![32],
            latent_dim: 12,
            head_hidden: None,
            domain_head_hidden: Some(64),
            task_classes: dataset.task_specs().iter().map(|t| t.n_classes).collect(),
            domain_classes: dataset.domain_specs().iter().map(|d| d.n_classes()).collect(),
            alpha: 1.0,
            beta: 1.0,
            lambda: 5.0,
            l2: 1e-5,
            lr: 1e-3,
            batch_size: 128,
            max_epochs: 200,
            seed: 0,
            balance_task: None,
            plateau: PlateauConfig::default(),
            selection: EpochSelection::default(),
        }
    }

    pub fn head_width(&self) -> usize {
        self.head_hidden.unwrap_or(self.latent_dim)
    }

    pub fn domain_head_width(&self) -> usize {
        self.domain_head_hidden.unwrap_or_else(|| self.head_width())
    }

    pub fn is_vanilla(&self) -> bool {
        self.task_classes.is_empty() && self.domain_classes.is_empty()
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |msg: String| Err(ModelError::Config(msg));
        if self.input_dim == 0 || self.latent_dim == 0 || self.encoder_hidden.contains(&0) || self.head_width() == 0 || self.domain_head_width() == 0
        {
            return bad("layer widths must be positive".into());
        }
        if self.task_classes.iter().chain(&self.domain_classes).any(|&c| c < 2) {
            return bad("every head needs at least 2 outputs".into());
        }
        for (name, v) in [("alpha", self.alpha), ("beta", self.beta), ("lambda", self.lambda), ("l2", self.l2)] {
            if !(v >= 0.0 && v.is_finite()) {
                return bad(format!("{name} must be a finite value >= 0, got {v}"));
            }
        }
        if !(self.lr > 0.0) || self.batch_size == 0 {
            return bad("lr and batch_size must be positive".into());
        }
        if let Some(t) = self.balance_task {
            if t >= self.task_classes.len() {
                return bad(format!("balance_task {t} has no task head"));
            }
        }
        Ok(())
    }

    fn encoder_widths(&self) -> Vec<usize> {
        std::iter::once(self.input_dim)
            .chain(self.encoder_hidden.iter().copied())
            .chain(std::iter::once(self.latent_dim))
            .collect()
    }

    fn decoder_widths(&self) -> Vec<usize> {
        let mut w = self.encoder_widths();
        w.reverse();
        w
    }
}

/// The same encoder/decoder with every task and domain head removed.
pub fn make_vanilla_ae(config: &DisAEConfig) -> DisAEConfig {
    DisAEConfig {
        task_classes: Vec::new(),
        domain_classes: Vec::new(),
        balance_task: None,
        ..config.clone()
    }
}

/// Weighted terms of the training objective.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    /// `alpha * MSE`.
    pub reconstruction: f64,
    /// `beta * CE` per task head.
    pub per_task: Vec<f64>,
    /// `CE` per domain head.
    pub per_domain: Vec<f64>,
    pub total: f64,
}

impl LossBreakdown {
    fn new(reconstruction: f64, per_task: Vec<f64>, per_domain: Vec<f64>) -> Self {
        let total = reconstruction + per_task.iter().sum::<f64>() + per_domain.iter().sum::<f64>();
        Self {
            reconstruction,
            per_task,
            per_domain,
            total,
        }
    }

    /// Part of the objective the encoder minimises (reconstruction + tasks).
    pub fn encoder_objective(&self) -> f64 {
        self.reconstruction + self.per_task.iter().sum::<f64>()
    }

    pub fn is_finite(&self) -> bool {
        self.total.is_finite()
    }

    /// Accumulates `other * weight` into `self` (for epoch means).
    pub(crate) fn add_scaled(&mut self, other: &LossBreakdown, weight: f64) {
        if self.per_task.is_empty() && self.per_domain.is_empty() && self.total == 0.0 {
            self.per_task = vec![0.0; other.per_task.len()];
            self.per_domain = vec![0.0; other.per_domain.len()];
        }
        self.reconstruction += other.reconstruction * weight;
        self.per_task.iter_mut().zip(&other.per_task).for_each(|(a, b)| *a += b * weight);
        self.per_domain.iter_mut().zip(&other.per_domain).for_each(|(a, b)| *a += b * weight);
        self.total += other.total * weight;
    }
}

/// Inputs and integer labels for every head.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    pub x: Array2<f64>,
    pub tasks: Vec<Vec<usize>>,
    pub domains: Vec<Vec<usize>>,
}

impl Batch {
    pub fn len(&self) -> usize {
        self.x.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn select(&self, idx: &[usize]) -> Batch {
        Batch {
            x: self.x.select(Axis(0), idx),
            tasks: self.tasks.iter().map(|c| idx.iter().map(|&i| c[i]).collect()).collect(),
            domains: self.domains.iter().map(|c| idx.iter().map(|&i| c[i]).collect()).collect(),
        }
    }
}

/// Gradients for every parameter group, in optimizer order.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelGrads {
    pub encoder: NetGrads,
    pub decoder: NetGrads,
    pub task_heads: Vec<NetGrads>,
    pub domain_heads: Vec<NetGrads>,
}

impl ModelGrads {
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = self.encoder.flatten();
        out.extend(self.decoder.flatten());
        self.task_heads.iter().chain(&self.domain_heads).for_each(|g| out.extend(g.flatten()));
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DisAEModel {
    pub config: DisAEConfig,
    pub encoder: DenseNet,
    pub decoder: DenseNet,
    pub task_heads: Vec<DenseNet>,
    pub domain_heads: Vec<DenseNet>,
    pub reversal: GradReversal,
    /// Bin edges for continuous domains (fitted on training data).
    pub domain_bins: Vec<Option<BinEdges>>,
    /// Input normalization the model was trained under, if recorded.
    pub norm: Option<NormStats>,
}

impl DisAEModel {
    pub fn new(config: DisAEConfig) -> Result<Self, ModelError> {
        config.validate()?;
        let mut rng = seeded(config.seed);
        let encoder = DenseNet::new(&config.encoder_widths(), Activation::Linear, &mut rng)?;
        let decoder = DenseNet::new(&config.decoder_widths(), Activation::Linear, &mut rng)?;
        let head = |w: usize, c: usize, rng: &mut _| DenseNet::new(&[config.latent_dim, w, c], Activation::Linear, rng);
        let task_heads = config
            .task_classes
            .iter()
            .map(|&c| head(config.head_width(), c, &mut rng))
            .collect::<Result<_, _>>()?;
        let domain_heads = config
            .domain_classes
            .iter()
            .map(|&c| head(config.domain_head_width(), c, &mut rng))
            .collect::<Result<_, _>>()?;
        Ok(Self {
            reversal: GradReversal::new(config.lambda)?,
            domain_bins: vec![None; config.domain_classes.len()],
            norm: None,
            config,
            encoder,
            decoder,
            task_heads,
            domain_heads,
        })
    }

    pub fn latent_dim(&self) -> usize {
        self.config.latent_dim
    }

    pub fn n_params(&self) -> usize {
        self.nets().map(DenseNet::n_params).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.nets().all(DenseNet::is_finite)
    }

    fn nets(&self) -> impl Iterator<Item = &DenseNet> {
        [&self.encoder, &self.decoder]
            .into_iter()
            .chain(&self.task_heads)
            .chain(&self.domain_heads)
    }

    fn nets_mut(&mut self) -> impl Iterator<Item = &mut DenseNet> {
        [&mut self.encoder, &mut self.decoder]
            .into_iter()
            .chain(self.task_heads.iter_mut())
            .chain(self.domain_heads.iter_mut())
    }

    /// All parameters in optimizer order (encoder, decoder, task heads, domain heads).
    pub fn flat_params(&self) -> Vec<f64> {
        self.nets().flat_map(DenseNet::flat_params).collect()
    }

    pub fn set_flat_params(&mut self, flat: &[f64]) -> Result<(), ModelError> {
        if flat.len() != self.n_params() {
            return Err(ModelError::Config(format!(
                "expected {} parameters, got {}",
                self.n_params(),
                flat.len()
            )));
        }
        let mut offset = 0;
        for net in self.nets_mut() {
            let n = net.n_params();
            net.set_flat_params(&flat[offset..offset + n])?;
            offset += n;
        }
        Ok(())
    }

    /// Number of encoder parameters (a prefix of [`Self::flat_params`]).
    pub fn n_encoder_params(&self) -> usize {
        self.encoder.n_params()
    }

    pub fn encode(&self, x: &Array2<f64>) -> Result<Array2<f64>, ModelError> {
        Ok(self.encoder.predict(x)?)
    }

    pub fn decode(&self, z: &Array2<f64>) -> Result<Array2<f64>, ModelError> {
        Ok(self.decoder.predict(z)?)
    }

    pub fn reconstruct(&self, x: &Array2<f64>) -> Result<Array2<f64>, ModelError> {
        self.decode(&self.encode(x)?)
    }

    pub fn task_logits(&self, z: &Array2<f64>) -> Result<Vec<Array2<f64>>, ModelError> {
        self.task_heads.iter().map(|h| Ok(h.predict(z)?)).collect()
    }

    pub fn domain_logits(&self, z: &Array2<f64>) -> Result<Vec<Array2<f64>>, ModelError> {
        self.domain_heads.iter().map(|h| Ok(h.predict(self.reversal.forward(z))?)).collect()
    }

    /// Labels for every head of this model, taken from `dataset`. Continuous
    /// domains are binned with the model's stored edges.
    pub fn batch_from(&self, dataset: &Dataset) -> Result<Batch, ModelError> {
        let n_tasks = self.task_heads.len();
        let n_domains = self.domain_heads.len();
        if dataset.n_tasks() < n_tasks {
            return Err(ModelError::MissingLabels(format!(
                "model has {n_tasks} task heads, dataset has {} task columns",
                dataset.n_tasks()
            )));
        }
        if dataset.n_domains() < n_domains {
            return Err(ModelError::MissingLabels(format!(
                "model has {n_domains} domain heads, dataset has {} domain columns",
                dataset.n_domains()
            )));
        }
        let mut domains = Vec::with_capacity(n_domains);
        for d in 0..n_domains {
            let ids = match &dataset.domain_labels()[d] {
                DomainColumn::Categorical(v) => v.clone(),
                DomainColumn::Continuous(v) => match &self.domain_bins[d] {
                    Some(edges) => edges.assign_all(v),
                    None => {
                        return Err(ModelError::Config(format!(
                            "continuous domain {d} has no fitted bin edges"
                        )))
                    }
                },
            };
            domains.push(ids);
        }
        Ok(Batch {
            x: dataset.features().clone(),
            tasks: dataset.task_labels()[..n_tasks].to_vec(),
            domains,
        })
    }

    /// Fits bin edges for continuous domains on `dataset`.
    pub fn fit_domain_bins(&mut self, dataset: &Dataset) -> Result<(), ModelError> {
        for d in 0..self.domain_heads.len() {
            let spec = &dataset.domain_specs()[d];
            self.domain_bins[d] = match (&dataset.domain_labels()[d], &spec.kind) {
                (DomainColumn::Continuous(v), crate::data::DomainKind::Continuous { n_bins, binning }) => {
                    Some(BinEdges::fit(v, *n_bins, *binning)?)
                }
                _ => None,
            };
        }
        Ok(())
    }

    fn check_batch(&self, batch: &Batch) -> Result<(), ModelError> {
        if batch.tasks.len() < self.task_heads.len() {
            return Err(ModelError::MissingLabels(format!(
                "{} task heads but {} task label columns",
                self.task_heads.len(),
                batch.tasks.len()
            )));
        }
        if batch.domains.len() < self.domain_heads.len() {
            return Err(ModelError::MissingLabels(format!(
                "{} domain heads but {} domain label columns",
                self.domain_heads.len(),
                batch.domains.len()
            )));
        }
        Ok(())
    }

    /// Evaluates the objective without gradients.
    pub fn compute_loss(&self, batch: &Batch) -> Result<LossBreakdown, ModelError> {
        self.check_batch(batch)?;
        let z = self.encode(&batch.x)?;
        let x_hat = self.decode(&z)?;
        let rec = self.config.alpha * mse(&x_hat, &batch.x)?.0;
        let per_task = self
            .task_heads
            .iter()
            .zip(&batch.tasks)
            .map(|(h, y)| Ok(self.config.beta * softmax_cross_entropy(&h.predict(&z)?, y)?.0))
            .collect::<Result<Vec<_>, ModelError>>()?;
        let per_domain = self
            .domain_heads
            .iter()
            .zip(&batch.domains)
            .map(|(h, y)| Ok(softmax_cross_entropy(&h.predict(self.reversal.forward(&z))?, y)?.0))
            .collect::<Result<Vec<_>, ModelError>>()?;
        Ok(LossBreakdown::new(rec, per_task, per_domain))
    }

    /// Objective and the gradients the joint optimizer applies. Domain-head
    /// parameters receive the true gradient of their loss; the encoder
    /// receives the domain gradient reversed and scaled by `lambda`.
    pub fn loss_and_grads(&self, batch: &Batch) -> Result<(LossBreakdown, ModelGrads), ModelError> {
        self.check_batch(batch)?;
        let cfg = &self.config;
        let enc = self.encoder.forward(&batch.x)?;
        let z = enc.output();

        let dec = self.decoder.forward(z)?;
        let (mse_val, mut g_rec) = mse(dec.output(), &batch.x)?;
        g_rec.mapv_inplace(|g| g * cfg.alpha);
        let (decoder_grads, mut grad_z) = self.decoder.backward(&dec, &g_rec)?;

        let mut per_task = Vec::with_capacity(self.task_heads.len());
        let mut task_grads = Vec::with_capacity(self.task_heads.len());
        for (head, labels) in self.task_heads.iter().zip(&batch.tasks) {
            let cache = head.forward(z)?;
            let (ce, mut g) = softmax_cross_entropy(cache.output(), labels)?;
            g.mapv_inplace(|v| v * cfg.beta);
            let (hg, gz) = head.backward(&cache, &g)?;
            grad_z += &gz;
            per_task.push(cfg.beta * ce);
            task_grads.push(hg);
        }

        let mut per_domain = Vec::with_capacity(self.domain_heads.len());
        let mut domain_grads = Vec::with_capacity(self.domain_heads.len());
        for (head, labels) in self.domain_heads.iter().zip(&batch.domains) {
            let cache = head.forward(self.reversal.forward(z))?;
            let (ce, g) = softmax_cross_entropy(cache.output(), labels)?;
            let (hg, gz) = head.backward(&cache, &g)?;
            grad_z += &self.reversal.backward(&gz);
            per_domain.push(ce);
            domain_grads.push(hg);
        }

        let (encoder_grads, _) = self.encoder.backward(&enc, &grad_z)?;
        Ok((
            LossBreakdown::new(cfg.alpha * mse_val, per_task, per_domain),
            ModelGrads {
                encoder: encoder_grads,
                decoder: decoder_grads,
                task_heads: task_grads,
                domain_heads: domain_grads,
            },
        ))
    }

    pub(crate) fn param_blocks<'a>(&'a mut self, grads: &'a ModelGrads) -> Vec<ParamBlock<'a>> {
        let mut blocks = self.encoder.param_blocks("encoder", &grads.encoder);
        blocks.extend(self.decoder.param_blocks("decoder", &grads.decoder));
        for (t, (h, g)) in self.task_heads.iter_mut().zip(&grads.task_heads).enumerate() {
            blocks.extend(h.param_blocks(&format!("task_head{t}"), g));
        }
        for (d, (h, g)) in self.domain_heads.iter_mut().zip(&grads.domain_heads).enumerate() {
            blocks.extend(h.param_blocks(&format!("domain_head{d}"), g));
        }
        blocks
    }

    /// Named parameter tensors in checkpoint order: `(name, rows, cols, values)`.
    pub(crate) fn named_tensors(&self) -> Vec<(String, usize, usize, Vec<f64>)> {
        let mut out = Vec::new();
        let groups = [("encoder".to_string(), &self.encoder), ("decoder".to_string(), &self.decoder)]
            .into_iter()
            .chain(self.task_heads.iter().enumerate().map(|(t, h)| (format!("task_head{t}"), h)))
            .chain(self.domain_heads.iter().enumerate().map(|(d, h)| (format!("domain_head{d}"), h)));
        for (prefix, net) in groups {
            for (l, layer) in net.layers().iter().enumerate() {
                let (r, c) = layer.weight.dim();
                out.push((format!("{prefix}.{l}.weight"), r, c, layer.weight.iter().copied().collect()));
                out.push((format!("{prefix}.{l}.bias"), 1, c, layer.bias.to_vec()));
            }
        }
        out
    }
}
