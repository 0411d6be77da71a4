use ndarray::{Array2, Axis};
use rand::seq::{index, SliceRandom};
use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::SynthError;
use crate::data::{Dataset, TaskSpec};
use crate::rng::{derive_seed, seeded, Rng};

/// Class structure of one generated task. `ratios[c]` is the relative size
/// of class `c`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskGenSpec {
    pub name: String,
    pub ratios: Vec<f64>,
}

impl TaskGenSpec {
    pub fn balanced(name: impl Into<String>, n_classes: usize) -> Self {
        Self {
            name: name.into(),
            ratios: vec![1.0; n_classes],
        }
    }

    pub fn n_classes(&self) -> usize {
        self.ratios.len()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorConfig {
    pub n_samples: usize,
    pub n_features: usize,
    pub n_informative: usize,
    pub n_redundant: usize,
    /// Half the side length of the class hypercube (classification), or the
    /// signal-to-noise factor of each decision function (multilabel).
    pub class_sep: f64,
    pub tasks: Vec<TaskGenSpec>,
    /// Fraction of labels replaced by a uniformly drawn class.
    #[serde(default)]
    pub flip_y: f64,
    /// Std of Gaussian noise added to the informative block before it is
    /// mixed into the redundant columns, so redundant copies are blurred.
    #[serde(default)]
    pub redundant_noise: f64,
    pub seed: u64,
}

impl GeneratorConfig {
    pub fn n_tasks(&self) -> usize {
        self.tasks.len()
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |m: String| Err(SynthError::InvalidConfig(m));
        if self.n_informative == 0 {
            return bad("n_informative must be at least 1".into());
        }
        if self.n_informative + self.n_redundant > self.n_features {
            return bad(format!(
                "n_informative + n_redundant = {} exceeds n_features = {}",
                self.n_informative + self.n_redundant,
                self.n_features
            ));
        }
        if self.n_samples == 0 {
            return bad("n_samples must be positive".into());
        }
        if !(self.class_sep.is_finite() && self.class_sep > 0.0) {
            return bad(format!("class_sep must be positive, got {}", self.class_sep));
        }
        if !(0.0..=1.0).contains(&self.flip_y) {
            return bad(format!("flip_y must lie in [0, 1], got {}", self.flip_y));
        }
        if !(self.redundant_noise.is_finite() && self.redundant_noise >= 0.0) {
            return bad(format!("redundant_noise must be non-negative, got {}", self.redundant_noise));
        }
        if self.tasks.is_empty() {
            return bad("at least one task is required".into());
        }
        for t in &self.tasks {
            if t.n_classes() < 2 {
                return bad(format!("task `{}` needs at least 2 classes", t.name));
            }
            if t.ratios.iter().any(|r| !(r.is_finite() && *r > 0.0)) {
                return bad(format!("task `{}` has a non-positive class ratio", t.name));
            }
        }
        Ok(())
    }

    fn feature_names(&self) -> Vec<String> {
        (0..self.n_features).map(|j| format!("x{j}")).collect()
    }

    fn task_specs(&self) -> Vec<TaskSpec> {
        self.tasks.iter().map(|t| TaskSpec::new(t.name.clone(), t.n_classes())).collect()
    }
}

/// Splits `n` into integer counts proportional to `ratios` (largest
/// remainder, ties to the lower index).
pub fn allocate_counts(n: usize, ratios: &[f64]) -> Vec<usize> {
    let total: f64 = ratios.iter().sum();
    let exact: Vec<f64> = ratios.iter().map(|r| n as f64 * r / total).collect();
    let mut counts: Vec<usize> = exact.iter().map(|e| e.floor() as usize).collect();
    let mut order: Vec<usize> = (0..ratios.len()).collect();
    order.sort_by(|&a, &b| {
        let ra = exact[a] - counts[a] as f64;
        let rb = exact[b] - counts[b] as f64;
        rb.total_cmp(&ra).then(a.cmp(&b))
    });
    let missing = n - counts.iter().sum::<usize>();
    for &i in order.iter().take(missing) {
        counts[i] += 1;
    }
    counts
}

fn class_counts(task: &TaskGenSpec, n: usize) -> Result<Vec<usize>, SynthError> {
    let counts = allocate_counts(n, &task.ratios);
    if let Some(class) = counts.iter().position(|&c| c == 0) {
        return Err(SynthError::ImpossibleRatio {
            task: task.name.clone(),
            class,
            n_samples: n,
        });
    }
    Ok(counts)
}

fn normal_matrix(rows: usize, cols: usize, rng: &mut Rng) -> Array2<f64> {
    Array2::from_shape_simple_fn((rows, cols), || StandardNormal.sample(rng))
}

/// Appends redundant columns (random linear combinations of the informative
/// block, coefficients uniform in [-1, 1], optionally perturbed) and
/// standard-normal noise columns.
fn complete_features(informative: Array2<f64>, config: &GeneratorConfig, rng: &mut Rng) -> Array2<f64> {
    let n = informative.nrows();
    let mix = Array2::from_shape_simple_fn((config.n_informative, config.n_redundant), || rng.random_range(-1.0..1.0));
    let redundant = if config.redundant_noise > 0.0 {
        (&informative + &(normal_matrix(n, config.n_informative, rng) * config.redundant_noise)).dot(&mix)
    } else {
        informative.dot(&mix)
    };
    let noise = normal_matrix(n, config.n_features - config.n_informative - config.n_redundant, rng);
    ndarray::concatenate(Axis(1), &[informative.view(), redundant.view(), noise.view()]).expect("row counts agree")
}

fn flip_labels(labels: &mut [usize], n_classes: usize, flip_y: f64, rng: &mut Rng) {
    if flip_y <= 0.0 {
        return;
    }
    for y in labels.iter_mut() {
        if rng.random::<f64>() < flip_y {
            *y = rng.random_range(0..n_classes);
        }
    }
}

/// Gaussian class blobs around distinct hypercube vertices. Column order is
/// informative, redundant, noise. Single task only.
pub fn make_classification(config: &GeneratorConfig) -> Result<Dataset, SynthError> {
    config.validate()?;
    if config.n_tasks() != 1 {
        return Err(SynthError::InvalidConfig(format!(
            "make_classification generates one task, got {}; use make_multilabel",
            config.n_tasks()
        )));
    }
    let task = &config.tasks[0];
    let k = task.n_classes();
    let d = config.n_informative;
    if d < usize::BITS as usize && k > 1usize << d {
        return Err(SynthError::InvalidConfig(format!(
            "{k} classes need more than {d} informative features"
        )));
    }
    let counts = class_counts(task, config.n_samples)?;
    let mut rng = seeded(derive_seed(config.seed, &[0]));

    let n_vertices = if d >= 20 { 1usize << 20 } else { 1usize << d };
    let vertices = index::sample(&mut rng, n_vertices, k).into_vec();
    let centroids: Vec<Vec<f64>> = vertices
        .iter()
        .map(|&v| {
            (0..d)
                .map(|b| if (v >> b) & 1 == 1 { config.class_sep } else { -config.class_sep })
                .collect()
        })
        .collect();

    let mut labels: Vec<usize> = counts.iter().enumerate().flat_map(|(c, &m)| std::iter::repeat_n(c, m)).collect();
    labels.shuffle(&mut rng);
    let mut informative = normal_matrix(config.n_samples, d, &mut rng);
    for (mut row, &y) in informative.axis_iter_mut(Axis(0)).zip(&labels) {
        row.iter_mut().zip(&centroids[y]).for_each(|(v, c)| *v += c);
    }
    let x = complete_features(informative, config, &mut rng);
    flip_labels(&mut labels, k, config.flip_y, &mut rng);
    Ok(Dataset::new(
        x,
        config.feature_names(),
        vec![labels],
        Vec::new(),
        config.task_specs(),
        Vec::new(),
    )?)
}

/// Orthonormal rows when `k <= d`, otherwise independent unit vectors.
fn decision_directions(k: usize, d: usize, rng: &mut Rng) -> Vec<Vec<f64>> {
    let mut out: Vec<Vec<f64>> = Vec::with_capacity(k);
    while out.len() < k {
        let mut v: Vec<f64> = (0..d).map(|_| StandardNormal.sample(rng)).collect();
        if out.len() < d {
            for u in &out {
                let dot: f64 = v.iter().zip(u).map(|(a, b)| a * b).sum();
                v.iter_mut().zip(u).for_each(|(a, b)| *a -= dot * b);
            }
        }
        let norm = v.iter().map(|a| a * a).sum::<f64>().sqrt();
        if norm > 1e-8 {
            out.push(v.into_iter().map(|a| a / norm).collect());
        }
    }
    out
}

/// Several tasks over shared standard-normal informative features. Task `t`
/// scores every sample with `class_sep * w_t . x + N(0, 1)`, with the `w_t`
/// orthonormal, and cuts the ranked scores into classes of the declared
/// sizes (class 0 lowest).
pub fn make_multilabel(config: &GeneratorConfig) -> Result<Dataset, SynthError> {
    config.validate()?;
    if config.n_tasks() < 2 {
        return Err(SynthError::InvalidConfig(format!(
            "make_multilabel needs at least 2 tasks, got {}",
            config.n_tasks()
        )));
    }
    let counts: Vec<Vec<usize>> = config
        .tasks
        .iter()
        .map(|t| class_counts(t, config.n_samples))
        .collect::<Result<_, _>>()?;
    let mut rng = seeded(derive_seed(config.seed, &[0]));
    let n = config.n_samples;
    let informative = normal_matrix(n, config.n_informative, &mut rng);
    let dirs = decision_directions(config.n_tasks(), config.n_informative, &mut rng);

    let mut labels = Vec::with_capacity(config.n_tasks());
    for (t, w) in dirs.iter().enumerate() {
        let scores: Vec<f64> = informative
            .axis_iter(Axis(0))
            .map(|row| {
                let s: f64 = row.iter().zip(w).map(|(a, b)| a * b).sum();
                let e: f64 = StandardNormal.sample(&mut rng);
                config.class_sep * s + e
            })
            .collect();
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]).then(a.cmp(&b)));
        let mut y = vec![0usize; n];
        let mut pos = 0;
        for (c, &m) in counts[t].iter().enumerate() {
            for &i in &order[pos..pos + m] {
                y[i] = c;
            }
            pos += m;
        }
        flip_labels(&mut y, config.tasks[t].n_classes(), config.flip_y, &mut rng);
        labels.push(y);
    }
    let x = complete_features(informative, config, &mut rng);
    Ok(Dataset::new(
        x,
        config.feature_names(),
        labels,
        Vec::new(),
        config.task_specs(),
        Vec::new(),
    )?)
}
