//! Synthetic tabular datasets with controlled task structure and injected
//! domain shifts: a hypercube-blob classifier generator, a multi-task
//! generator, affine and continuous shift plans, and the standard datasets
//! A, B, C and Many Affines.

mod generator;
mod shift;
mod standard;

use thiserror::Error;

use crate::data::DataError;

pub use generator::{allocate_counts, make_classification, make_multilabel, GeneratorConfig, TaskGenSpec};
pub use shift::{apply_shift_plan, AffineInstance, Response, ShiftDomain, ShiftPlan};
pub use standard::{
    generate_standard, Generated, Provenance, StandardDataset, MANY_AFFINES_DESK, MANY_AFFINES_FULL,
    MANY_AFFINES_INSTANCES,
};

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid generator configuration: {0}")]
    InvalidConfig(String),
    #[error("class {class} of task `{task}` receives no samples out of {n_samples}")]
    ImpossibleRatio { task: String, class: usize, n_samples: usize },
    #[error("domain `{domain}` declares {got} ratios for {expected} instances")]
    RatioLength { domain: String, expected: usize, got: usize },
    #[error("invalid shift plan: {0}")]
    InvalidPlan(String),
    #[error("unknown dataset `{0}` (expected A, B, C or many-affines)")]
    UnknownDataset(String),
    #[error(transparent)]
    Data(#[from] DataError),
}
