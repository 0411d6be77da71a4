//! Tabular dataset model: labels, normalization, domain binning, folds,
//! balanced sampling, and CSV persistence.

mod dataset;
mod discretize;
mod folds;
pub mod io;
mod normalize;
mod sampler;

use std::path::Path;

use thiserror::Error;

pub use dataset::{Binning, Dataset, DomainColumn, DomainKind, DomainSpec, TaskSpec};
pub use discretize::{discretize_domain, BinEdges};
pub use folds::{make_folds, split_off_fraction, SplitPlan, DEFAULT_VAL_FRACTION};
pub use io::{load_dataset, load_dataset_with_schema, meta_path, save_dataset, DatasetMeta, FORMAT_VERSION};
pub use normalize::{denormalize, normalize, NormStats, STD_FLOOR};
pub use sampler::WeightedBatchSampler;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("csv: {0}")]
    Csv(String),
    #[error("metadata: {0}")]
    Meta(String),
    #[error("schema error: missing column `{0}`")]
    MissingColumn(String),
    #[error("row {row}, column `{column}`: cannot parse `{value}`")]
    Parse { row: usize, column: String, value: String },
    #[error("non-finite feature value at row {first_row} ({count} row(s) rejected)")]
    NonFinite { first_row: usize, count: usize },
    #[error("row {row}, column `{column}`: label {value} outside [0, {limit})")]
    LabelOutOfRange {
        column: String,
        row: usize,
        value: i64,
        limit: usize,
    },
    #[error("column `{column}` has {got} entries, expected {expected}")]
    LengthMismatch { column: String, expected: usize, got: usize },
    #[error("only {distinct} distinct values for {n_bins} bins; use a lower n_bins")]
    TooFewDistinct { distinct: usize, n_bins: usize },
    #[error("task `{task}` has no samples in class {class}")]
    EmptyClass { task: String, class: usize },
    #[error("invalid: {0}")]
    InvalidSpec(String),
}

impl DataError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        DataError::Io {
            path: path.display().to_string(),
            source,
        }
    }
}
