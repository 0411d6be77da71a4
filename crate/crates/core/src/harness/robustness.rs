use std::collections::BTreeMap;

use ndarray::Axis;
use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::experiment::{fit_probes, ModelKind};
use super::probe::ProbeConfig;
use super::{run_pool, HarnessError};
use crate::data::{split_off_fraction, Dataset, DomainColumn, NormStats, DEFAULT_VAL_FRACTION};
use crate::metrics::{model_variation, Dissimilarity, LabelSet, VariationOptions};
use crate::model::{train_model, DisAEConfig, DisAEModel};
use crate::nn::{accuracy, argmax_rows};
use crate::rng::{derive_seed, seeded};

/// Source counts evaluated when none are given.
pub const DEFAULT_SOURCE_COUNTS: [usize; 6] = [2, 5, 10, 20, 35, 50];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobustnessPlan {
    pub source_counts: Vec<usize>,
    pub kinds: Vec<ModelKind>,
    pub model: DisAEConfig,
    pub seed: u64,
    pub val_fraction: f64,
    /// Options for `V^sup`; Jensen-Shannon by default.
    pub variation: VariationOptions,
    /// At most this many rows per (instance, class) enter each `V^sup`.
    pub max_per_cell: usize,
    pub probe: ProbeConfig,
    pub workers: usize,
}

impl RobustnessPlan {
    pub fn new(dataset: &Dataset) -> Self {
        Self {
            source_counts: DEFAULT_SOURCE_COUNTS.to_vec(),
            kinds: vec![ModelKind::DisAe, ModelKind::Vanilla],
            model: DisAEConfig::for_dataset(dataset),
            seed: 0,
            val_fraction: DEFAULT_VAL_FRACTION,
            variation: VariationOptions {
                rho: Dissimilarity::jsd(),
                n_directions: 64,
                ..VariationOptions::default()
            },
            max_per_cell: 150,
            probe: ProbeConfig::default(),
            workers: 1,
        }
    }
}

/// One cell of the grid. `target_rank == 0` is the source-only point
/// (validation rows of the source instances).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobustnessPoint {
    pub target_rank: usize,
    pub n: usize,
    pub v_sup: Option<f64>,
    pub accuracy: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobustnessCurve {
    pub model: String,
    pub source_count: usize,
    pub points: Vec<RobustnessPoint>,
}

impl RobustnessCurve {
    fn accuracy_by_rank(&self) -> BTreeMap<usize, f64> {
        self.points
            .iter()
            .filter(|p| p.target_rank > 0)
            .filter_map(|p| p.accuracy.map(|a| (p.target_rank, a)))
            .collect()
    }
}

/// Fraction of the target ranks present in both curves at which `upper`
/// has strictly higher accuracy than `lower`. `None` if they share no rank.
pub fn dominance_fraction(upper: &RobustnessCurve, lower: &RobustnessCurve) -> Option<f64> {
    let a = upper.accuracy_by_rank();
    let b = lower.accuracy_by_rank();
    let common: Vec<(f64, f64)> = a.iter().filter_map(|(r, x)| b.get(r).map(|y| (*x, *y))).collect();
    if common.is_empty() {
        return None;
    }
    Some(common.iter().filter(|(x, y)| x > y).count() as f64 / common.len() as f64)
}

fn instance_column(dataset: &Dataset) -> Result<&[usize], HarnessError> {
    dataset
        .domain_labels()
        .first()
        .and_then(DomainColumn::as_categorical)
        .ok_or_else(|| HarnessError::Invalid("robustness needs a categorical first domain".into()))
}

/// Up to `cap` rows per (instance, class of task 0), chosen by a seeded shuffle.
fn capped(rows: &[usize], dataset: &Dataset, cap: usize, seed: u64) -> Vec<usize> {
    let ids = dataset.domain_labels()[0].as_categorical().expect("checked");
    let y = &dataset.task_labels()[0];
    let mut shuffled = rows.to_vec();
    shuffled.shuffle(&mut seeded(seed));
    let mut taken: BTreeMap<(usize, usize), usize> = BTreeMap::new();
    let mut out: Vec<usize> = shuffled
        .into_iter()
        .filter(|&r| {
            let c = taken.entry((ids[r], y[r])).or_insert(0);
            *c += 1;
            *c <= cap
        })
        .collect();
    out.sort_unstable();
    out
}

struct Job {
    kind: ModelKind,
    source_count: usize,
}

fn task_accuracy(
    model: &DisAEModel,
    probes: &[crate::harness::Probe],
    dataset: &Dataset,
    x: &ndarray::Array2<f64>,
    rows: &[usize],
) -> Result<f64, HarnessError> {
    let z = model.encode(&x.select(Axis(0), rows))?;
    let y: Vec<usize> = rows.iter().map(|&r| dataset.task_labels()[0][r]).collect();
    if probes.is_empty() {
        let logits = model.task_logits(&z)?;
        Ok(accuracy(&argmax_rows(&logits[0]), &y))
    } else {
        probes[0].accuracy(&z, &y)
    }
}

fn run_job(dataset: &Dataset, ranks: &[usize], plan: &RobustnessPlan, job: &Job) -> Result<RobustnessCurve, HarnessError> {
    let ids = instance_column(dataset)?;
    let c = job.source_count;
    let seed = derive_seed(plan.seed, &[c as u64]);
    let source_rows: Vec<usize> = (0..ids.len()).filter(|&r| ranks[ids[r]] <= c).collect();
    let source = dataset.subset(&source_rows);
    let (fit, val) = split_off_fraction(&(0..source_rows.len()).collect::<Vec<_>>(), plan.val_fraction, derive_seed(seed, &[1]));
    let stats = NormStats::fit(source.features());
    let x = stats.apply(dataset.features())?;
    let norm_source = source.with_features(x.select(Axis(0), &source_rows))?;
    let config = DisAEConfig {
        seed: derive_seed(seed, &[2]),
        ..job.kind.resolve(&plan.model, dataset)
    };
    let val_ds = norm_source.subset(&val);
    let trained = train_model(&norm_source.subset(&fit), (!val.is_empty()).then_some(&val_ds), &config)?;
    let model = trained.model;
    let probes = match job.kind {
        ModelKind::DisAe => Vec::new(),
        ModelKind::Vanilla => {
            let fit_ds = norm_source.subset(&fit);
            let cfg = ProbeConfig {
                seed: derive_seed(seed, &[3]),
                ..plan.probe
            };
            fit_probes(&model.encode(fit_ds.features())?, &fit_ds, &cfg)?
        }
    };

    let source_cap = capped(&source_rows, dataset, plan.max_per_cell, derive_seed(seed, &[4]));
    let vsup = |rows: &[usize]| -> Result<f64, HarnessError> {
        let z = model.encode(&x.select(Axis(0), rows))?;
        let labels = LabelSet::from_dataset(&dataset.subset(rows), None)?.with_domains(&[0]);
        Ok(model_variation(&z, &labels, &plan.variation)?.v_sup)
    };

    let val_rows: Vec<usize> = val.iter().map(|&i| source_rows[i]).collect();
    let mut points = Vec::new();
    let source_point = |rows: &[usize]| -> Result<RobustnessPoint, HarnessError> {
        Ok(RobustnessPoint {
            target_rank: 0,
            n: rows.len(),
            v_sup: if c >= 2 { Some(vsup(&source_cap)?) } else { None },
            accuracy: Some(task_accuracy(&model, &probes, dataset, &x, rows)?),
            error: None,
        })
    };
    points.push(source_point(if val_rows.is_empty() { &source_rows } else { &val_rows })?);

    let mut targets: Vec<(usize, usize)> = ranks.iter().enumerate().filter(|(_, &r)| r > c).map(|(i, &r)| (r, i)).collect();
    targets.sort_unstable();
    for (rank, inst) in targets {
        let rows: Vec<usize> = (0..ids.len()).filter(|&r| ids[r] == inst).collect();
        let point = (|| -> Result<RobustnessPoint, HarnessError> {
            let target_cap = capped(&rows, dataset, plan.max_per_cell, derive_seed(seed, &[5, inst as u64]));
            let joint: Vec<usize> = source_cap.iter().chain(&target_cap).copied().collect();
            Ok(RobustnessPoint {
                target_rank: rank,
                n: rows.len(),
                v_sup: Some(vsup(&joint)?),
                accuracy: Some(task_accuracy(&model, &probes, dataset, &x, &rows)?),
                error: None,
            })
        })();
        points.push(point.unwrap_or_else(|e| RobustnessPoint {
            target_rank: rank,
            n: rows.len(),
            v_sup: None,
            accuracy: None,
            error: Some(e.to_string()),
        }));
    }
    Ok(RobustnessCurve {
        model: job.kind.label().to_string(),
        source_count: c,
        points,
    })
}

/// Every cell of a job that could not be trained, marked with `error`.
fn failed_curve(ranks: &[usize], job: &Job, error: &str) -> RobustnessCurve {
    let mut target_ranks: Vec<usize> = ranks.iter().copied().filter(|&r| r > job.source_count).collect();
    target_ranks.sort_unstable();
    let points = std::iter::once(0)
        .chain(target_ranks)
        .map(|target_rank| RobustnessPoint {
            target_rank,
            n: 0,
            v_sup: None,
            accuracy: None,
            error: Some(error.to_string()),
        })
        .collect();
    RobustnessCurve {
        model: job.kind.label().to_string(),
        source_count: job.source_count,
        points,
    }
}

/// For each model kind and source count `c`, trains on the instances of
/// rank `<= c` and evaluates task accuracy and `V^sup` on every remaining
/// instance in rank order. `ranks[i]` is the (1-based) distance rank of
/// instance `i` of the first domain. A failed training yields a curve whose
/// cells all carry the error.
pub fn robustness_study(dataset: &Dataset, ranks: &[usize], plan: &RobustnessPlan) -> Result<Vec<RobustnessCurve>, HarnessError> {
    let ids = instance_column(dataset)?;
    let n_inst = dataset.domain_specs()[0].n_classes();
    if ranks.len() != n_inst {
        return Err(HarnessError::Invalid(format!("{} ranks for {n_inst} instances", ranks.len())));
    }
    if ids.is_empty() || plan.source_counts.is_empty() || plan.kinds.is_empty() {
        return Err(HarnessError::Invalid("robustness grid is empty".into()));
    }
    if let Some(&c) = plan.source_counts.iter().find(|&&c| c > n_inst || c == 0) {
        return Err(HarnessError::SourceCount { count: c, instances: n_inst });
    }
    let jobs: Vec<Job> = plan
        .kinds
        .iter()
        .flat_map(|&kind| plan.source_counts.iter().map(move |&source_count| Job { kind, source_count }))
        .collect();
    let curves = run_pool(plan.workers, || {
        jobs.par_iter()
            .map(|job| {
                run_job(dataset, ranks, plan, job).unwrap_or_else(|e| failed_curve(ranks, job, &e.to_string()))
            })
            .collect()
    });
    Ok(curves)
}
