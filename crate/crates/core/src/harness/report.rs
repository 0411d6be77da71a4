//! CSV reports and run manifests. Floats are written in shortest
//! round-trip form so reruns with the same seed produce identical bytes.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::experiment::{ExperimentResult, ProbeRow, VariationRow};
use super::robustness::RobustnessCurve;
use super::sweep::SweepRow;
use super::HarnessError;
use crate::model::TrainHistory;

pub const REPORT_FORMAT_VERSION: &str = "1";

fn num(v: f64) -> String {
    format!("{v}")
}

fn opt(v: Option<f64>) -> String {
    v.map(num).unwrap_or_default()
}

fn join(values: &[f64]) -> String {
    values.iter().map(|v| num(*v)).collect::<Vec<_>>().join(";")
}

fn writer(path: &Path) -> Result<csv::Writer<fs::File>, HarnessError> {
    csv::Writer::from_path(path).map_err(|e| HarnessError::Report(format!("{}: {e}", path.display())))
}

fn finish(mut w: csv::Writer<fs::File>) -> Result<(), HarnessError> {
    w.flush()?;
    Ok(())
}

fn csv_err(e: csv::Error) -> HarnessError {
    HarnessError::Report(e.to_string())
}

/// Fold-averaged terms, one row per experiment.
pub fn write_scores_csv(path: &Path, dataset: &str, results: &[&ExperimentResult]) -> Result<(), HarnessError> {
    let mut w = writer(path)?;
    w.write_record([
        "dataset",
        "model",
        "accuracy_source",
        "folds",
        "repeats",
        "accuracy",
        "variation",
        "reconstruction",
        "score",
        "score_std",
        "task_accuracies",
        "failed_runs",
    ])
    .map_err(csv_err)?;
    for r in results {
        w.write_record([
            dataset.to_string(),
            r.plan.name.clone(),
            r.plan.kind.accuracy_source().to_string(),
            r.folds.len().to_string(),
            r.plan.repeats.to_string(),
            num(r.mean.accuracy),
            num(r.mean.variation),
            num(r.mean.reconstruction),
            num(r.mean.score),
            num(r.score_std),
            join(&r.mean.task_accuracies),
            r.failures.len().to_string(),
        ])
        .map_err(csv_err)?;
    }
    finish(w)
}

/// Per-fold winners of every experiment.
pub fn write_folds_csv(path: &Path, results: &[&ExperimentResult]) -> Result<(), HarnessError> {
    let mut w = writer(path)?;
    w.write_record([
        "model",
        "fold",
        "best_repeat",
        "seed",
        "accuracy",
        "variation",
        "reconstruction",
        "score",
        "raw_v_sup",
        "repeat_scores",
    ])
    .map_err(csv_err)?;
    for r in results {
        for f in &r.folds {
            let repeats: Vec<String> = f.repeat_scores.iter().map(|s| s.map(num).unwrap_or_else(|| "failed".into())).collect();
            w.write_record([
                r.plan.name.clone(),
                f.fold.to_string(),
                f.best_repeat.to_string(),
                f.seed.to_string(),
                num(f.report.accuracy),
                num(f.report.variation),
                num(f.report.reconstruction),
                num(f.report.score),
                num(f.raw_v_sup),
                repeats.join(";"),
            ])
            .map_err(csv_err)?;
        }
    }
    finish(w)
}

pub fn write_variation_csv(path: &Path, rows: &[VariationRow]) -> Result<(), HarnessError> {
    let mut w = writer(path)?;
    w.write_record(["representation", "domain", "target", "within_source", "source_and_target"])
        .map_err(csv_err)?;
    for r in rows {
        w.write_record([
            r.representation.clone(),
            r.domain.clone(),
            r.target.clone(),
            num(r.within_source),
            num(r.source_and_target),
        ])
        .map_err(csv_err)?;
    }
    finish(w)
}

pub fn write_probe_csv(path: &Path, rows: &[ProbeRow], probe_name: &str) -> Result<(), HarnessError> {
    let mut w = writer(path)?;
    w.write_record(["representation", "task", "group", "n", "accuracy", "class_accuracies", "probe"])
        .map_err(csv_err)?;
    for r in rows {
        w.write_record([
            r.representation.clone(),
            r.task.clone(),
            r.group.name.clone(),
            r.group.n.to_string(),
            num(r.group.accuracy),
            join(&r.group.per_class),
            probe_name.to_string(),
        ])
        .map_err(csv_err)?;
    }
    finish(w)
}

pub fn write_robustness_csv(path: &Path, curves: &[RobustnessCurve]) -> Result<(), HarnessError> {
    let mut w = writer(path)?;
    w.write_record(["model", "source_count", "target_rank", "n", "v_sup", "accuracy", "status"])
        .map_err(csv_err)?;
    for c in curves {
        for p in &c.points {
            w.write_record([
                c.model.clone(),
                c.source_count.to_string(),
                p.target_rank.to_string(),
                p.n.to_string(),
                opt(p.v_sup),
                opt(p.accuracy),
                p.error.clone().map_or_else(|| "ok".to_string(), |e| format!("failed: {e}")),
            ])
            .map_err(csv_err)?;
        }
    }
    finish(w)
}

pub fn write_sweep_csv(path: &Path, rows: &[SweepRow]) -> Result<(), HarnessError> {
    let mut w = writer(path)?;
    let keys: Vec<String> = rows.first().map(|r| r.params.iter().map(|(k, _)| k.clone()).collect()).unwrap_or_default();
    let mut header = vec!["rank".to_string()];
    header.extend(keys.iter().cloned());
    header.extend(["accuracy", "variation", "reconstruction", "score", "score_std", "failed_runs"].map(String::from));
    w.write_record(&header).map_err(csv_err)?;
    for r in rows {
        let mut rec = vec![r.rank.to_string()];
        rec.extend(r.params.iter().map(|(_, v)| v.to_string()));
        rec.extend([
            num(r.mean.accuracy),
            num(r.mean.variation),
            num(r.mean.reconstruction),
            num(r.mean.score),
            num(r.score_std),
            r.failures.to_string(),
        ]);
        w.write_record(&rec).map_err(csv_err)?;
    }
    finish(w)
}

/// One row per epoch; `best` marks the epoch whose parameters were kept.
pub fn write_history_csv(path: &Path, history: &TrainHistory) -> Result<(), HarnessError> {
    let mut w = writer(path)?;
    w.write_record([
        "epoch",
        "lr",
        "train_total",
        "train_reconstruction",
        "train_task",
        "train_domain",
        "val_total",
        "val_accuracy",
        "val_reconstruction",
        "proxy",
        "best",
    ])
    .map_err(csv_err)?;
    for (i, e) in history.epochs.iter().enumerate() {
        w.write_record([
            e.epoch.to_string(),
            num(e.lr),
            num(e.train.total),
            num(e.train.reconstruction),
            num(e.train.per_task.iter().sum()),
            num(e.train.per_domain.iter().sum()),
            opt(e.val.as_ref().map(|v| v.total)),
            opt(e.val_accuracy),
            opt(e.val_reconstruction),
            opt(e.proxy),
            u8::from(i == history.best_epoch).to_string(),
        ])
        .map_err(csv_err)?;
    }
    finish(w)
}

/// Resolved configuration, seeds and format versions of one command.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub command: String,
    pub tool_version: String,
    pub report_format_version: String,
    pub dataset_format_version: String,
    pub checkpoint_format_version: u32,
    pub seed: u64,
    pub config: serde_json::Value,
    pub outputs: Vec<String>,
    pub substitutions: Vec<String>,
    pub notes: Vec<String>,
}

impl Manifest {
    pub fn new(command: impl Into<String>, seed: u64, config: serde_json::Value) -> Self {
        Self {
            command: command.into(),
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            report_format_version: REPORT_FORMAT_VERSION.to_string(),
            dataset_format_version: crate::data::FORMAT_VERSION.to_string(),
            checkpoint_format_version: crate::model::CHECKPOINT_VERSION,
            seed,
            config,
            outputs: Vec::new(),
            substitutions: vec![format!(
                "downstream accuracy uses a {} in place of gradient-boosted trees",
                super::PROBE_NAME
            )],
            notes: Vec::new(),
        }
    }

    pub fn write(&self, path: &Path) -> Result<(), HarnessError> {
        let text = serde_json::to_string_pretty(self).map_err(|e| HarnessError::Report(e.to_string()))?;
        fs::write(path, text + "\n")?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::RobustnessPoint;

    #[test]
    fn robustness_rows_mark_failures() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("r.csv");
        let curves = vec![RobustnessCurve {
            model: "dis-ae".into(),
            source_count: 2,
            points: vec![
                RobustnessPoint {
                    target_rank: 0,
                    n: 10,
                    v_sup: Some(0.25),
                    accuracy: Some(0.5),
                    error: None,
                },
                RobustnessPoint {
                    target_rank: 3,
                    n: 4,
                    v_sup: None,
                    accuracy: None,
                    error: Some("boom".into()),
                },
            ],
        }];
        write_robustness_csv(&path, &curves).unwrap();
        let text = fs::read_to_string(&path).unwrap();
        assert_eq!(
            text,
            "model,source_count,target_rank,n,v_sup,accuracy,status\n\
             dis-ae,2,0,10,0.25,0.5,ok\n\
             dis-ae,2,3,4,,,failed: boom\n"
        );
    }
}
