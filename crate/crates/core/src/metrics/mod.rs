//! Out-of-distribution metrics: 1-D Wasserstein-2 and Jensen-Shannon
//! dissimilarities, feature and model variation, the selection score, and
//! the per-domain reliability table.

mod distance;
mod reliability;
mod score;
mod variation;

use thiserror::Error;

pub use distance::{jsd, jsd_discrete, wasserstein2_1d, Dissimilarity, JsdConfig};
pub use reliability::{reliability_assessment, ReliabilityRow, Representation};
pub use score::{relative_reconstruction_error, selection_score, ScoreReport};
pub use variation::{
    axis_variation, candidate_directions, feature_variation, model_variation, FeatureVariation, LabelSet,
    VariationOptions, VariationReport, DEFAULT_DIRECTIONS, DEFAULT_MIN_CELL,
};

#[derive(Debug, Error)]
pub enum MetricError {
    #[error("empty sample set")]
    EmptySample,
    #[error("domain `{domain}` has {instances} instance(s); at least 2 are needed")]
    DegenerateDomain { domain: String, instances: usize },
    #[error("raw-data variation is zero; the dataset has no domain shift to normalise by")]
    ZeroRawVariation,
    #[error("target split is missing or empty")]
    MissingTarget,
    #[error("shape mismatch in {what}: expected {expected}, got {got}")]
    Shape {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error(transparent)]
    Model(#[from] crate::model::ModelError),
}
