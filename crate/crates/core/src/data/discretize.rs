use serde::{Deserialize, Serialize};

use super::{Binning, DataError, DomainKind, DomainSpec};

/// Interior bin edges; a value falls in bin `#{edges <= value}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinEdges {
    pub edges: Vec<f64>,
}

impl BinEdges {
    pub fn fit(values: &[f64], n_bins: usize, binning: Binning) -> Result<Self, DataError> {
        if n_bins < 2 {
            return Err(DataError::InvalidSpec(format!("need at least 2 bins, got {n_bins}")));
        }
        if let Some(row) = values.iter().position(|v| !v.is_finite()) {
            return Err(DataError::NonFinite { first_row: row, count: 1 });
        }
        let mut sorted = values.to_vec();
        sorted.sort_by(f64::total_cmp);
        let mut distinct = sorted.clone();
        distinct.dedup();
        if distinct.len() < n_bins {
            return Err(DataError::TooFewDistinct {
                distinct: distinct.len(),
                n_bins,
            });
        }
        let n = sorted.len();
        let edges = match binning {
            Binning::Quantile => (1..n_bins).map(|b| sorted[b * n / n_bins]).collect(),
            Binning::Uniform => {
                let (lo, hi) = (sorted[0], sorted[n - 1]);
                (1..n_bins)
                    .map(|b| lo + (hi - lo) * b as f64 / n_bins as f64)
                    .collect()
            }
        };
        Ok(Self { edges })
    }

    pub fn n_bins(&self) -> usize {
        self.edges.len() + 1
    }

    pub fn assign(&self, value: f64) -> usize {
        self.edges.partition_point(|&e| e <= value)
    }

    pub fn assign_all(&self, values: &[f64]) -> Vec<usize> {
        values.iter().map(|&v| self.assign(v)).collect()
    }
}

/// Bins a continuous domain column into `[0, n_bins)`.
pub fn discretize_domain(values: &[f64], spec: &DomainSpec) -> Result<Vec<usize>, DataError> {
    match spec.kind {
        DomainKind::Continuous { n_bins, binning } => Ok(BinEdges::fit(values, n_bins, binning)?.assign_all(values)),
        DomainKind::Categorical { .. } => Err(DataError::InvalidSpec(format!(
            "domain `{}` is categorical; nothing to discretise",
            spec.name
        ))),
    }
}
