use ndarray::{Array2, Axis};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::probe::{downstream_probe, Probe, ProbeConfig, ProbeGroup, ProbeSplit, PROBE_NAME};
use super::{run_pool, HarnessError};
use crate::data::{make_folds, BinEdges, Dataset, DomainColumn, DomainKind, NormStats, DEFAULT_VAL_FRACTION};
use crate::metrics::{
    model_variation, reliability_assessment, selection_score, LabelSet, Representation, ScoreReport, VariationOptions,
};
use crate::model::{make_vanilla_ae, train_model, DisAEConfig, DisAEModel, TrainHistory};
use crate::rng::derive_seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelKind {
    DisAe,
    Vanilla,
}

impl ModelKind {
    pub fn label(self) -> &'static str {
        match self {
            Self::DisAe => "dis-ae",
            Self::Vanilla => "vanilla-ae",
        }
    }

    /// Where the accuracy term of this kind comes from.
    pub fn accuracy_source(self) -> &'static str {
        match self {
            Self::DisAe => "task-heads",
            Self::Vanilla => "probe",
        }
    }

    /// The trainable configuration for this kind, sized for `dataset`.
    pub fn resolve(self, template: &DisAEConfig, dataset: &Dataset) -> DisAEConfig {
        let sized = DisAEConfig {
            input_dim: dataset.n_features(),
            task_classes: dataset.task_specs().iter().map(|t| t.n_classes).collect(),
            domain_classes: dataset.domain_specs().iter().map(|d| d.n_classes()).collect(),
            ..template.clone()
        };
        match self {
            Self::DisAe => sized,
            Self::Vanilla => make_vanilla_ae(&sized),
        }
    }
}

/// Cross-validated training and scoring of one model configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentPlan {
    pub name: String,
    pub kind: ModelKind,
    /// Architecture and training template; layer sizes for inputs and heads
    /// are taken from the dataset.
    pub model: DisAEConfig,
    pub folds: usize,
    pub repeats: usize,
    pub seed: u64,
    /// Instances of the first domain used as source data; `None` uses all samples.
    pub source_instances: Option<Vec<usize>>,
    pub val_fraction: f64,
    pub variation: VariationOptions,
    pub probe: ProbeConfig,
    pub workers: usize,
}

impl ExperimentPlan {
    pub fn new(kind: ModelKind, dataset: &Dataset) -> Self {
        Self {
            name: kind.label().to_string(),
            kind,
            model: DisAEConfig::for_dataset(dataset),
            folds: 5,
            repeats: 1,
            seed: 0,
            source_instances: None,
            val_fraction: DEFAULT_VAL_FRACTION,
            variation: VariationOptions::default(),
            probe: ProbeConfig::default(),
            workers: 1,
        }
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        if self.folds < 2 {
            return Err(HarnessError::Invalid(format!("need at least 2 folds, got {}", self.folds)));
        }
        if self.repeats == 0 {
            return Err(HarnessError::Invalid("repeats must be at least 1".into()));
        }
        if !(0.0..1.0).contains(&self.val_fraction) {
            return Err(HarnessError::Invalid(format!("val_fraction {} outside [0, 1)", self.val_fraction)));
        }
        Ok(())
    }
}

/// The winning repeat of one fold.
#[derive(Debug, Clone)]
pub struct FoldResult {
    pub fold: usize,
    pub best_repeat: usize,
    pub seed: u64,
    /// Score of every repeat; `None` marks a failed run.
    pub repeat_scores: Vec<Option<f64>>,
    pub report: ScoreReport,
    pub raw_v_sup: f64,
    pub model: DisAEModel,
    pub history: TrainHistory,
    /// Dataset rows used for training (fit + validation) in this fold.
    pub train_rows: Vec<usize>,
    /// Dataset rows held out and scored in this fold.
    pub held_rows: Vec<usize>,
    /// Probes used for the accuracy term (vanilla models only), one per task.
    pub probes: Vec<Probe>,
}

#[derive(Debug, Clone)]
pub struct ExperimentResult {
    pub plan: ExperimentPlan,
    pub folds: Vec<FoldResult>,
    /// Fold means of the three terms and the score recomputed from them.
    pub mean: ScoreReport,
    pub score_std: f64,
    pub failures: Vec<String>,
    pub source_rows: Vec<usize>,
}

impl ExperimentResult {
    /// The fold whose winner scored highest.
    pub fn best_fold(&self) -> &FoldResult {
        self.folds
            .iter()
            .max_by(|a, b| a.report.score.total_cmp(&b.report.score).then(b.fold.cmp(&a.fold)))
            .expect("an experiment has at least one fold")
    }
}

/// Bin edges for the continuous domains of `dataset`.
pub fn fit_domain_bins(dataset: &Dataset) -> Result<Vec<Option<BinEdges>>, HarnessError> {
    dataset
        .domain_labels()
        .iter()
        .zip(dataset.domain_specs())
        .map(|(col, spec)| match (col, &spec.kind) {
            (DomainColumn::Continuous(v), DomainKind::Continuous { n_bins, binning }) => {
                Ok(Some(BinEdges::fit(v, *n_bins, *binning)?))
            }
            _ => Ok(None),
        })
        .collect()
}

pub(crate) fn source_rows(dataset: &Dataset, instances: Option<&[usize]>) -> Result<Vec<usize>, HarnessError> {
    match instances {
        Some(ids) => {
            if dataset.n_domains() == 0 {
                return Err(HarnessError::Invalid("source instances given but the dataset has no domains".into()));
            }
            Ok(dataset.indices_with_instances(0, ids)?)
        }
        None => Ok((0..dataset.n_samples()).collect()),
    }
}

fn normalized(dataset: &Dataset, stats: &NormStats) -> Result<Dataset, HarnessError> {
    Ok(dataset.with_features(stats.apply(dataset.features())?)?)
}

/// Trains one probe per task on `fit` latents.
pub(crate) fn fit_probes(z: &Array2<f64>, ds: &Dataset, cfg: &ProbeConfig) -> Result<Vec<Probe>, HarnessError> {
    ds.task_specs()
        .iter()
        .enumerate()
        .map(|(t, spec)| {
            let c = ProbeConfig {
                seed: derive_seed(cfg.seed, &[t as u64]),
                ..*cfg
            };
            Probe::fit(z, &ds.task_labels()[t], spec.n_classes, &c)
        })
        .collect()
}

struct FoldData {
    train_rows: Vec<usize>,
    held_rows: Vec<usize>,
    fit: Dataset,
    val: Dataset,
    held: Dataset,
    stats: NormStats,
    labels: LabelSet,
    raw_v_sup: f64,
}

struct RepeatOutcome {
    report: ScoreReport,
    model: DisAEModel,
    history: TrainHistory,
    probes: Vec<Probe>,
    seed: u64,
}

fn run_repeat(plan: &ExperimentPlan, config: &DisAEConfig, data: &FoldData, f: usize, r: usize) -> Result<RepeatOutcome, HarnessError> {
    let seed = derive_seed(plan.seed, &[1, f as u64, r as u64]);
    let cfg = DisAEConfig { seed, ..config.clone() };
    let mut trained = train_model(&data.fit, Some(&data.val), &cfg)?;
    trained.model.norm = Some(data.stats.clone());
    let model = trained.model;
    let (external, probes) = match plan.kind {
        ModelKind::DisAe => (None, Vec::new()),
        ModelKind::Vanilla => {
            let probe_cfg = ProbeConfig {
                seed: derive_seed(seed, &[7]),
                ..plan.probe
            };
            let probes = fit_probes(&model.encode(data.fit.features())?, &data.fit, &probe_cfg)?;
            let z_held = model.encode(data.held.features())?;
            let accs = probes
                .iter()
                .enumerate()
                .map(|(t, p)| p.accuracy(&z_held, &data.held.task_labels()[t]))
                .collect::<Result<Vec<_>, _>>()?;
            (Some(accs), probes)
        }
    };
    let report = selection_score(
        &model,
        &data.held,
        &data.labels,
        &plan.variation,
        data.raw_v_sup,
        external.as_deref(),
    )?;
    Ok(RepeatOutcome {
        report,
        model,
        history: trained.history,
        probes,
        seed,
    })
}

/// k-fold cross-validation over the source data. Every fold trains
/// `repeats` seeded models on its training part (with a validation
/// subdivision), scores each on the held-out part, and keeps the best.
pub fn run_experiment(dataset: &Dataset, plan: &ExperimentPlan) -> Result<ExperimentResult, HarnessError> {
    plan.validate()?;
    let source_rows = source_rows(dataset, plan.source_instances.as_deref())?;
    let source = dataset.subset(&source_rows);
    let mut split = make_folds(&source, plan.folds, derive_seed(plan.seed, &[0]))?;
    split.val_fraction = plan.val_fraction;
    let config = plan.kind.resolve(&plan.model, dataset);
    config.validate()?;

    let folds: Vec<FoldData> = run_pool(plan.workers, || {
        (0..plan.folds)
            .into_par_iter()
            .map(|f| -> Result<FoldData, HarnessError> {
                let train = split.training(f);
                let held = split.held_out(f);
                let (fit, val) = split.fit_validation(f);
                let stats = NormStats::fit(source.subset(&train).features());
                let norm_source = normalized(&source, &stats)?;
                let bins = fit_domain_bins(&source.subset(&train))?;
                let held_ds = norm_source.subset(&held);
                let labels = LabelSet::from_dataset(&held_ds, Some(&bins))?;
                let raw_v_sup = model_variation(held_ds.features(), &labels, &plan.variation)?.v_sup;
                Ok(FoldData {
                    train_rows: train.iter().map(|&i| source_rows[i]).collect(),
                    held_rows: held.iter().map(|&i| source_rows[i]).collect(),
                    fit: norm_source.subset(&fit),
                    val: norm_source.subset(&val),
                    held: held_ds,
                    stats,
                    labels,
                    raw_v_sup,
                })
            })
            .collect::<Result<Vec<_>, _>>()
    })?;

    let jobs: Vec<(usize, usize)> = (0..plan.folds).flat_map(|f| (0..plan.repeats).map(move |r| (f, r))).collect();
    let outcomes: Vec<Result<RepeatOutcome, HarnessError>> = run_pool(plan.workers, || {
        jobs.par_iter()
            .map(|&(f, r)| run_repeat(plan, &config, &folds[f], f, r))
            .collect()
    });

    let mut failures = Vec::new();
    let mut per_fold: Vec<Vec<Option<RepeatOutcome>>> = (0..plan.folds).map(|_| Vec::new()).collect();
    for (&(f, r), outcome) in jobs.iter().zip(outcomes) {
        match outcome {
            Ok(o) => per_fold[f].push(Some(o)),
            Err(e) => {
                failures.push(format!("fold {f} repeat {r}: {e}"));
                per_fold[f].push(None);
            }
        }
    }

    let mut results = Vec::with_capacity(plan.folds);
    for (f, (outcomes, data)) in per_fold.into_iter().zip(folds).enumerate() {
        let repeat_scores: Vec<Option<f64>> = outcomes.iter().map(|o| o.as_ref().map(|o| o.report.score)).collect();
        let best = outcomes
            .into_iter()
            .enumerate()
            .filter_map(|(r, o)| o.map(|o| (r, o)))
            .reduce(|a, b| if b.1.report.score > a.1.report.score { b } else { a });
        let Some((best_repeat, o)) = best else {
            let diagnostics: Vec<String> = failures.iter().filter(|m| m.starts_with(&format!("fold {f} "))).cloned().collect();
            return Err(HarnessError::AllRepeatsFailed {
                fold: f,
                diagnostics: diagnostics.join("; "),
            });
        };
        results.push(FoldResult {
            fold: f,
            best_repeat,
            seed: o.seed,
            repeat_scores,
            report: o.report,
            raw_v_sup: data.raw_v_sup,
            model: o.model,
            history: o.history,
            train_rows: data.train_rows,
            held_rows: data.held_rows,
            probes: o.probes,
        });
    }

    let (mean, score_std) = aggregate(&results);
    Ok(ExperimentResult {
        plan: plan.clone(),
        folds: results,
        mean,
        score_std,
        failures,
        source_rows,
    })
}

/// Fold means of each term and the sample standard deviation of the score.
pub fn aggregate(folds: &[FoldResult]) -> (ScoreReport, f64) {
    let k = folds.len() as f64;
    let n_tasks = folds[0].report.task_accuracies.len();
    let accs: Vec<f64> = (0..n_tasks)
        .map(|t| folds.iter().map(|f| f.report.task_accuracies[t]).sum::<f64>() / k)
        .collect();
    let var = folds.iter().map(|f| f.report.variation).sum::<f64>() / k;
    let rec = folds.iter().map(|f| f.report.reconstruction).sum::<f64>() / k;
    let mean = ScoreReport::from_terms(accs, var, rec);
    let std = if folds.len() > 1 {
        (folds.iter().map(|f| (f.report.score - mean.score).powi(2)).sum::<f64>() / (k - 1.0)).sqrt()
    } else {
        0.0
    };
    (mean, std)
}

/// Per-domain variation of one representation on the source data alone and
/// with one target group added.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariationRow {
    pub representation: String,
    pub domain: String,
    pub target: String,
    pub within_source: f64,
    pub source_and_target: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeRow {
    pub representation: String,
    pub task: String,
    pub group: ProbeGroup,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TargetAssessment {
    pub variation: Vec<VariationRow>,
    pub probe: Vec<ProbeRow>,
    pub probe_name: String,
}

/// Instance label used in reports (1-based).
pub fn instance_label(id: usize) -> String {
    format!("instance {}", id + 1)
}

/// Evaluates the best fold's model on the whole source split and on every
/// non-source instance of the first domain: per-domain variation tables and
/// downstream probe accuracies. With `include_raw` the unmodified
/// (normalised) features are assessed as well.
pub fn assess_targets(dataset: &Dataset, result: &ExperimentResult, include_raw: bool) -> Result<TargetAssessment, HarnessError> {
    let plan = &result.plan;
    let best = result.best_fold();
    let model = &best.model;
    let stats = model.norm.as_ref().ok_or_else(|| HarnessError::Invalid("model has no normalization".into()))?;
    let x = stats.apply(dataset.features())?;
    let z = model.encode(&x)?;
    let mut reps: Vec<(String, Array2<f64>)> = Vec::new();
    if include_raw {
        reps.push(("raw".into(), x));
    }
    reps.push((plan.name.clone(), z));

    let source_set: std::collections::HashSet<usize> = result.source_rows.iter().copied().collect();
    let targets: Vec<(String, Vec<usize>)> = match (&plan.source_instances, dataset.domain_labels().first()) {
        (Some(src), Some(DomainColumn::Categorical(ids))) => {
            let n_inst = dataset.domain_specs()[0].n_classes();
            (0..n_inst)
                .filter(|i| !src.contains(i))
                .map(|i| {
                    let rows: Vec<usize> = (0..ids.len()).filter(|&r| ids[r] == i && !source_set.contains(&r)).collect();
                    (instance_label(i), rows)
                })
                .filter(|(_, rows)| !rows.is_empty())
                .collect()
        }
        _ => Vec::new(),
    };

    let source = dataset.subset(&result.source_rows);
    let bins = fit_domain_bins(&source)?;
    let source_labels = LabelSet::from_dataset(&source, Some(&bins))?;

    let mut variation = Vec::new();
    for (name, rep) in &reps {
        let src_rep = rep.select(Axis(0), &result.source_rows);
        if targets.is_empty() {
            for (d, dom) in source_labels.domain_names.iter().enumerate() {
                let v = model_variation(&src_rep, &source_labels.with_domains(&[d]), &plan.variation)?.v_sup;
                variation.push(VariationRow {
                    representation: name.clone(),
                    domain: dom.clone(),
                    target: "none".into(),
                    within_source: v,
                    source_and_target: v,
                });
            }
        }
        for (tname, rows) in &targets {
            let tgt_rep = rep.select(Axis(0), rows);
            let tgt_labels = LabelSet::from_dataset(&dataset.subset(rows), Some(&bins))?;
            let table = reliability_assessment(
                &[Representation {
                    name: name.clone(),
                    source: &src_rep,
                    target: &tgt_rep,
                }],
                &source_labels,
                &tgt_labels,
                &plan.variation,
            )?;
            variation.extend(table.into_iter().map(|r| VariationRow {
                representation: r.representation,
                domain: r.domain,
                target: tname.clone(),
                within_source: r.within_source,
                source_and_target: r.source_and_target,
            }));
        }
    }

    let mut probe = Vec::new();
    let mut eval = vec![("source".to_string(), best.held_rows.clone())];
    eval.extend(targets.iter().cloned());
    let split = ProbeSplit {
        train: best.train_rows.clone(),
        eval,
    };
    for (name, rep) in &reps {
        for (t, spec) in dataset.task_specs().iter().enumerate() {
            let cfg = ProbeConfig {
                seed: derive_seed(plan.probe.seed, &[t as u64, 11]),
                ..plan.probe
            };
            let groups = downstream_probe(rep, &dataset.task_labels()[t], spec.n_classes, &split, &cfg)?;
            probe.extend(groups.into_iter().map(|g| ProbeRow {
                representation: name.clone(),
                task: spec.name.clone(),
                group: g,
            }));
        }
    }
    Ok(TargetAssessment {
        variation,
        probe,
        probe_name: PROBE_NAME.to_string(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{generate_standard, StandardDataset};

    fn small_plan(kind: ModelKind, ds: &Dataset) -> ExperimentPlan {
        let mut p = ExperimentPlan::new(kind, ds);
        p.folds = 2;
        p.repeats = 2;
        p.model.max_epochs = 3;
        p.model.encoder_hidden = vec![8];
        p.model.latent_dim = 3;
        p.variation.n_directions = 64;
        p.probe.epochs = 3;
        p.source_instances = Some(vec![0, 1]);
        p
    }

    #[test]
    fn smoke_and_determinism() {
        let g = generate_standard(StandardDataset::A, 1, Some(600)).unwrap();
        let plan = small_plan(ModelKind::DisAe, &g.dataset);
        let a = run_experiment(&g.dataset, &plan).unwrap();
        let b = run_experiment(&g.dataset, &plan).unwrap();
        assert_eq!(a.folds.len(), 2);
        assert_eq!(a.mean, b.mean);
        for f in &a.folds {
            let best = f.repeat_scores.iter().flatten().fold(f64::NEG_INFINITY, |m, &s| m.max(s));
            assert_eq!(f.report.score, best);
        }
        assert!((a.mean.score - a.mean.recomputed_score()).abs() < 1e-12);
        let assess = assess_targets(&g.dataset, &a, true).unwrap();
        assert_eq!(assess.variation.len(), 2 * 3);
        assert!(assess.probe.iter().any(|r| r.group.name == "instance 5"));
    }

    #[test]
    fn vanilla_uses_probe_accuracy() {
        let g = generate_standard(StandardDataset::A, 2, Some(600)).unwrap();
        let plan = small_plan(ModelKind::Vanilla, &g.dataset);
        let r = run_experiment(&g.dataset, &plan).unwrap();
        assert!(r.folds.iter().all(|f| f.probes.len() == 1 && f.model.task_heads.is_empty()));
        assert!(r.mean.accuracy > 0.0);
    }
}
