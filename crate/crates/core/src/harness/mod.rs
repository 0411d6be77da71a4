//! Experiment orchestration: cross-validated training with per-fold model
//! selection, hyperparameter sweeps, the robustness grid, downstream probes
//! and the CSV/manifest outputs.

mod experiment;
mod probe;
mod report;
mod robustness;
mod sweep;

use thiserror::Error;

use crate::data::DataError;
use crate::metrics::MetricError;
use crate::model::ModelError;
use crate::nn::NnError;

pub use experiment::{
    aggregate, assess_targets, fit_domain_bins, instance_label, run_experiment, ExperimentPlan, ExperimentResult,
    FoldResult, ModelKind, ProbeRow, TargetAssessment, VariationRow,
};
pub(crate) use experiment::{fit_probes, source_rows};
pub use probe::{downstream_probe, Probe, ProbeConfig, ProbeGroup, ProbeSplit, PROBE_NAME};
pub use report::{
    write_folds_csv, write_history_csv, write_probe_csv, write_robustness_csv, write_scores_csv, write_sweep_csv, write_variation_csv,
    Manifest, REPORT_FORMAT_VERSION,
};
pub use robustness::{
    dominance_fraction, robustness_study, RobustnessCurve, RobustnessPlan, RobustnessPoint, DEFAULT_SOURCE_COUNTS,
};
pub use sweep::{apply_overrides, sweep, SweepGrid, SweepRow};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error("invalid plan: {0}")]
    Invalid(String),
    #[error("probe training split contains a single class")]
    SingleClass,
    #[error("source count {count} exceeds the {instances} available instances")]
    SourceCount { count: usize, instances: usize },
    #[error("every repeat of fold {fold} failed: {diagnostics}")]
    AllRepeatsFailed { fold: usize, diagnostics: String },
    #[error("report: {0}")]
    Report(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl From<NnError> for HarnessError {
    fn from(e: NnError) -> Self {
        HarnessError::Model(ModelError::Nn(e))
    }
}

/// Runs `f` on a dedicated pool of `workers` threads (at least one).
pub(crate) fn run_pool<T: Send>(workers: usize, f: impl FnOnce() -> T + Send) -> T {
    match rayon::ThreadPoolBuilder::new().num_threads(workers.max(1)).build() {
        Ok(pool) => pool.install(f),
        Err(_) => f(),
    }
}
