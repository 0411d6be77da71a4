use ndarray::{Array2, ArrayView1, Axis};
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{Dissimilarity, MetricError};
use crate::data::{BinEdges, Dataset, DataError, DomainColumn, DomainKind, STD_FLOOR};
use crate::rng::seeded;

/// Default number of random directions added to the coordinate axes.
pub const DEFAULT_DIRECTIONS: usize = 512;
/// Conditional cells smaller than this are left out of the max.
pub const DEFAULT_MIN_CELL: usize = 10;

/// Task labels plus categorical (or already binned) domain labels.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelSet {
    pub task_names: Vec<String>,
    pub tasks: Vec<Vec<usize>>,
    pub domain_names: Vec<String>,
    pub domains: Vec<Vec<usize>>,
}

impl LabelSet {
    pub fn len(&self) -> usize {
        self.tasks
            .first()
            .or(self.domains.first())
            .map_or(0, Vec::len)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Labels of `dataset`; continuous domains are binned with `bins[d]`
    /// when given, otherwise with edges fitted on this data.
    pub fn from_dataset(dataset: &Dataset, bins: Option<&[Option<BinEdges>]>) -> Result<Self, DataError> {
        let mut domains = Vec::with_capacity(dataset.n_domains());
        for (d, (spec, col)) in dataset.domain_specs().iter().zip(dataset.domain_labels()).enumerate() {
            let ids = match (col, &spec.kind) {
                (DomainColumn::Categorical(v), _) => v.clone(),
                (DomainColumn::Continuous(v), DomainKind::Continuous { n_bins, binning }) => {
                    match bins.and_then(|b| b.get(d).cloned().flatten()) {
                        Some(edges) => edges.assign_all(v),
                        None => BinEdges::fit(v, *n_bins, *binning)?.assign_all(v),
                    }
                }
                _ => return Err(DataError::InvalidSpec(format!("domain `{}` kind mismatch", spec.name))),
            };
            domains.push(ids);
        }
        Ok(Self {
            task_names: dataset.task_specs().iter().map(|t| t.name.clone()).collect(),
            tasks: dataset.task_labels().to_vec(),
            domain_names: dataset.domain_specs().iter().map(|d| d.name.clone()).collect(),
            domains,
        })
    }

    /// Keeps only the listed domains.
    pub fn with_domains(&self, keep: &[usize]) -> Self {
        Self {
            task_names: self.task_names.clone(),
            tasks: self.tasks.clone(),
            domain_names: keep.iter().map(|&d| self.domain_names[d].clone()).collect(),
            domains: keep.iter().map(|&d| self.domains[d].clone()).collect(),
        }
    }

    pub fn concat(&self, other: &LabelSet) -> Result<Self, MetricError> {
        if self.tasks.len() != other.tasks.len() || self.domains.len() != other.domains.len() {
            return Err(MetricError::InvalidArgument("label sets have different columns".into()));
        }
        let cat = |a: &[Vec<usize>], b: &[Vec<usize>]| {
            a.iter()
                .zip(b)
                .map(|(x, y)| x.iter().chain(y).copied().collect())
                .collect()
        };
        Ok(Self {
            task_names: self.task_names.clone(),
            tasks: cat(&self.tasks, &other.tasks),
            domain_names: self.domain_names.clone(),
            domains: cat(&self.domains, &other.domains),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VariationOptions {
    pub rho: Dissimilarity,
    pub n_directions: usize,
    pub min_cell: usize,
    pub seed: u64,
}

impl Default for VariationOptions {
    fn default() -> Self {
        Self {
            rho: Dissimilarity::Wasserstein2,
            n_directions: DEFAULT_DIRECTIONS,
            min_cell: DEFAULT_MIN_CELL,
            seed: 0,
        }
    }
}

impl VariationOptions {
    pub fn with_rho(rho: Dissimilarity) -> Self {
        Self {
            rho,
            ..Default::default()
        }
    }
}

/// `V` of one feature together with every `(task, domain)` entry it maximises over.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureVariation {
    /// `cells[task][domain]`.
    pub cells: Vec<Vec<f64>>,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariationReport {
    pub v_sup: f64,
    /// Unit direction attaining `v_sup`.
    pub direction: Vec<f64>,
    /// Per-(task, domain) entries at `direction`.
    pub cells: Vec<Vec<f64>>,
    /// `V` along each coordinate axis.
    pub axis_variation: Vec<f64>,
    /// Random directions evaluated in addition to the axes.
    pub n_random_directions: usize,
    pub rho: Dissimilarity,
}

/// Precomputed grouping of sample indices into `(task, class, domain, instance)` cells.
struct CellIndex {
    n_tasks: usize,
    n_domains: usize,
    /// For each (task, domain): per class, the list of instance cells (sample index lists).
    groups: Vec<Vec<Vec<Vec<usize>>>>,
}

impl CellIndex {
    fn new(labels: &LabelSet, n: usize, min_cell: usize) -> Result<Self, MetricError> {
        for col in labels.tasks.iter().chain(&labels.domains) {
            if col.len() != n {
                return Err(MetricError::Shape {
                    what: "label column",
                    expected: n,
                    got: col.len(),
                });
            }
        }
        for (d, col) in labels.domains.iter().enumerate() {
            let mut seen: Vec<usize> = col.clone();
            seen.sort_unstable();
            seen.dedup();
            if seen.len() < 2 {
                return Err(MetricError::DegenerateDomain {
                    domain: labels.domain_names.get(d).cloned().unwrap_or_else(|| d.to_string()),
                    instances: seen.len(),
                });
            }
        }
        let mut groups = Vec::with_capacity(labels.tasks.len() * labels.domains.len());
        for task in &labels.tasks {
            let n_classes = task.iter().max().map_or(0, |m| m + 1);
            for dom in &labels.domains {
                let n_inst = dom.iter().max().map_or(0, |m| m + 1);
                let mut table = vec![vec![Vec::new(); n_inst]; n_classes];
                for i in 0..n {
                    table[task[i]][dom[i]].push(i);
                }
                let per_class = table
                    .into_iter()
                    .map(|cells| cells.into_iter().filter(|c| c.len() >= min_cell.max(1)).collect())
                    .collect();
                groups.push(per_class);
            }
        }
        Ok(Self {
            n_tasks: labels.tasks.len(),
            n_domains: labels.domains.len(),
            groups,
        })
    }

    /// `cells[task][domain]` for the normalised feature `values`.
    fn evaluate(&self, values: &[f64], rho: &Dissimilarity) -> Vec<Vec<f64>> {
        let mut out = vec![vec![0.0; self.n_domains]; self.n_tasks];
        for t in 0..self.n_tasks {
            for d in 0..self.n_domains {
                let mut best: f64 = 0.0;
                for class_cells in &self.groups[t * self.n_domains + d] {
                    let sorted: Vec<Vec<f64>> = class_cells
                        .iter()
                        .map(|idx| {
                            let mut v: Vec<f64> = idx.iter().map(|&i| values[i]).collect();
                            v.sort_by(f64::total_cmp);
                            v
                        })
                        .collect();
                    for a in 0..sorted.len() {
                        for b in a + 1..sorted.len() {
                            best = best.max(rho.between_sorted(&sorted[a], &sorted[b]));
                        }
                    }
                }
                out[t][d] = best;
            }
        }
        out
    }
}

fn normalized(values: ArrayView1<f64>) -> Vec<f64> {
    let n = values.len().max(1) as f64;
    let mean = values.sum() / n;
    let std = (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt().max(STD_FLOOR);
    values.iter().map(|v| (v - mean) / std).collect()
}

fn max_cell(cells: &[Vec<f64>]) -> f64 {
    cells.iter().flatten().copied().fold(0.0, f64::max)
}

/// Feature variation `V(phi)`: the worst dissimilarity, over tasks, domains,
/// task classes and instance pairs, between the class-conditional
/// distributions of the (normalised) feature.
pub fn feature_variation(
    values: &[f64],
    labels: &LabelSet,
    rho: &Dissimilarity,
    min_cell: usize,
) -> Result<FeatureVariation, MetricError> {
    rho.validate()?;
    let index = CellIndex::new(labels, values.len(), min_cell)?;
    let norm = normalized(ArrayView1::from(values));
    let cells = index.evaluate(&norm, rho);
    Ok(FeatureVariation {
        value: max_cell(&cells),
        cells,
    })
}

/// Unit directions used by [`model_variation`]: the `m` axes followed by
/// `n_random` Gaussian directions normalised to the sphere. The random
/// part for `n` is a prefix of the random part for any larger `n`.
pub fn candidate_directions(m: usize, n_random: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut dirs: Vec<Vec<f64>> = (0..m)
        .map(|j| {
            let mut e = vec![0.0; m];
            e[j] = 1.0;
            e
        })
        .collect();
    let mut rng = seeded(seed);
    while dirs.len() < m + n_random {
        let v: Vec<f64> = (0..m).map(|_| StandardNormal.sample(&mut rng)).collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-12 {
            dirs.push(v.into_iter().map(|x| x / norm).collect());
        }
    }
    dirs
}

/// Model variation `V^sup`: the supremum of `V(u^T z)` over unit directions,
/// approximated by the coordinate axes plus seeded random directions.
pub fn model_variation(
    z: &Array2<f64>,
    labels: &LabelSet,
    opts: &VariationOptions,
) -> Result<VariationReport, MetricError> {
    opts.rho.validate()?;
    let (n, m) = z.dim();
    if m == 0 {
        return Err(MetricError::InvalidArgument("representation has zero dimensions".into()));
    }
    if opts.n_directions < m {
        return Err(MetricError::InvalidArgument(format!(
            "need at least as many random directions as dimensions ({} < {m})",
            opts.n_directions
        )));
    }
    let index = CellIndex::new(labels, n, opts.min_cell)?;
    let dirs = candidate_directions(m, opts.n_directions, opts.seed);
    let evaluated: Vec<Vec<Vec<f64>>> = dirs
        .par_iter()
        .map(|u| {
            let proj = z.dot(&ArrayView1::from(u.as_slice()));
            index.evaluate(&normalized(proj.view()), &opts.rho)
        })
        .collect();
    let values: Vec<f64> = evaluated.iter().map(|c| max_cell(c)).collect();
    let best = values
        .iter()
        .enumerate()
        .fold(0, |bi, (i, &v)| if v > values[bi] { i } else { bi });
    Ok(VariationReport {
        v_sup: values[best],
        direction: dirs[best].clone(),
        cells: evaluated[best].clone(),
        axis_variation: values[..m].to_vec(),
        n_random_directions: opts.n_directions,
        rho: opts.rho,
    })
}

/// Per-column `V` of a matrix (each coordinate treated as a feature).
pub fn axis_variation(z: &Array2<f64>, labels: &LabelSet, rho: &Dissimilarity, min_cell: usize) -> Result<Vec<f64>, MetricError> {
    let index = CellIndex::new(labels, z.nrows(), min_cell)?;
    Ok(z.axis_iter(Axis(1))
        .map(|col| max_cell(&index.evaluate(&normalized(col), rho)))
        .collect())
}
