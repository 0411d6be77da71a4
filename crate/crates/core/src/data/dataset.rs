use ndarray::{Array2, Axis};
use serde::{Deserialize, Serialize};

use super::DataError;

/// A supervised prediction target.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskSpec {
    pub name: String,
    pub n_classes: usize,
    /// Optional per-class sampling weights used by the balanced sampler.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub class_weights: Option<Vec<f64>>,
}

impl TaskSpec {
    pub fn new(name: impl Into<String>, n_classes: usize) -> Self {
        Self {
            name: name.into(),
            n_classes,
            class_weights: None,
        }
    }

    pub fn validate(&self) -> Result<(), DataError> {
        if self.n_classes < 2 {
            return Err(DataError::InvalidSpec(format!(
                "task `{}` needs at least 2 classes, got {}",
                self.name, self.n_classes
            )));
        }
        if let Some(w) = &self.class_weights {
            if w.len() != self.n_classes || w.iter().any(|&x| !(x > 0.0) || !x.is_finite()) {
                return Err(DataError::InvalidSpec(format!(
                    "task `{}` class weights must be {} positive finite values",
                    self.name, self.n_classes
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Binning {
    Quantile,
    Uniform,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum DomainKind {
    Categorical { n_instances: usize },
    Continuous { n_bins: usize, binning: Binning },
}

/// A nuisance covariate. Continuous domains are discretised into bins
/// before they reach a domain head or a variation metric.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DomainSpec {
    pub name: String,
    #[serde(flatten)]
    pub kind: DomainKind,
}

impl DomainSpec {
    pub fn categorical(name: impl Into<String>, n_instances: usize) -> Self {
        Self {
            name: name.into(),
            kind: DomainKind::Categorical { n_instances },
        }
    }

    /// Continuous domain with the default 5 quantile bins.
    pub fn continuous(name: impl Into<String>) -> Self {
        Self::continuous_with(name, 5, Binning::Quantile)
    }

    pub fn continuous_with(name: impl Into<String>, n_bins: usize, binning: Binning) -> Self {
        Self {
            name: name.into(),
            kind: DomainKind::Continuous { n_bins, binning },
        }
    }

    /// Number of classes a domain head for this domain predicts.
    pub fn n_classes(&self) -> usize {
        match self.kind {
            DomainKind::Categorical { n_instances } => n_instances,
            DomainKind::Continuous { n_bins, .. } => n_bins,
        }
    }

    pub fn is_continuous(&self) -> bool {
        matches!(self.kind, DomainKind::Continuous { .. })
    }

    pub fn validate(&self) -> Result<(), DataError> {
        let (what, n) = match self.kind {
            DomainKind::Categorical { n_instances } => ("instances", n_instances),
            DomainKind::Continuous { n_bins, .. } => ("bins", n_bins),
        };
        if n < 2 {
            return Err(DataError::InvalidSpec(format!(
                "domain `{}` needs at least 2 {what}, got {n}",
                self.name
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum DomainColumn {
    Categorical(Vec<usize>),
    Continuous(Vec<f64>),
}

impl DomainColumn {
    pub fn len(&self) -> usize {
        match self {
            DomainColumn::Categorical(v) => v.len(),
            DomainColumn::Continuous(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn select(&self, idx: &[usize]) -> DomainColumn {
        match self {
            DomainColumn::Categorical(v) => DomainColumn::Categorical(idx.iter().map(|&i| v[i]).collect()),
            DomainColumn::Continuous(v) => DomainColumn::Continuous(idx.iter().map(|&i| v[i]).collect()),
        }
    }

    pub fn as_categorical(&self) -> Option<&[usize]> {
        match self {
            DomainColumn::Categorical(v) => Some(v),
            DomainColumn::Continuous(_) => None,
        }
    }

    pub fn as_continuous(&self) -> Option<&[f64]> {
        match self {
            DomainColumn::Continuous(v) => Some(v),
            DomainColumn::Categorical(_) => None,
        }
    }
}

/// Feature matrix with task and domain labels. Immutable once validated.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    features: Array2<f64>,
    feature_names: Vec<String>,
    task_labels: Vec<Vec<usize>>,
    domain_labels: Vec<DomainColumn>,
    task_specs: Vec<TaskSpec>,
    domain_specs: Vec<DomainSpec>,
}

impl Dataset {
    pub fn new(
        features: Array2<f64>,
        feature_names: Vec<String>,
        task_labels: Vec<Vec<usize>>,
        domain_labels: Vec<DomainColumn>,
        task_specs: Vec<TaskSpec>,
        domain_specs: Vec<DomainSpec>,
    ) -> Result<Self, DataError> {
        let n = features.nrows();
        if feature_names.len() != features.ncols() {
            return Err(DataError::InvalidSpec(format!(
                "{} feature names for {} feature columns",
                feature_names.len(),
                features.ncols()
            )));
        }
        if task_labels.len() != task_specs.len() || domain_labels.len() != domain_specs.len() {
            return Err(DataError::InvalidSpec(
                "label column count does not match spec count".into(),
            ));
        }
        let bad_rows: Vec<usize> = features
            .axis_iter(Axis(0))
            .enumerate()
            .filter(|(_, row)| row.iter().any(|v| !v.is_finite()))
            .map(|(i, _)| i)
            .collect();
        if let Some(&first) = bad_rows.first() {
            return Err(DataError::NonFinite {
                first_row: first,
                count: bad_rows.len(),
            });
        }
        for (spec, col) in task_specs.iter().zip(&task_labels) {
            spec.validate()?;
            if col.len() != n {
                return Err(DataError::LengthMismatch {
                    column: format!("task:{}", spec.name),
                    expected: n,
                    got: col.len(),
                });
            }
            if let Some((row, &v)) = col.iter().enumerate().find(|(_, &v)| v >= spec.n_classes) {
                return Err(DataError::LabelOutOfRange {
                    column: format!("task:{}", spec.name),
                    row,
                    value: v as i64,
                    limit: spec.n_classes,
                });
            }
        }
        for (spec, col) in domain_specs.iter().zip(&domain_labels) {
            spec.validate()?;
            let name = format!("domain:{}", spec.name);
            if col.len() != n {
                return Err(DataError::LengthMismatch {
                    column: name,
                    expected: n,
                    got: col.len(),
                });
            }
            match (&spec.kind, col) {
                (DomainKind::Categorical { n_instances }, DomainColumn::Categorical(v)) => {
                    if let Some((row, &x)) = v.iter().enumerate().find(|(_, &x)| x >= *n_instances) {
                        return Err(DataError::LabelOutOfRange {
                            column: name,
                            row,
                            value: x as i64,
                            limit: *n_instances,
                        });
                    }
                }
                (DomainKind::Continuous { .. }, DomainColumn::Continuous(v)) => {
                    if let Some(row) = v.iter().position(|x| !x.is_finite()) {
                        return Err(DataError::NonFinite { first_row: row, count: 1 });
                    }
                }
                _ => {
                    return Err(DataError::InvalidSpec(format!(
                        "column `{name}` does not match its declared kind"
                    )))
                }
            }
        }
        Ok(Self {
            features,
            feature_names,
            task_labels,
            domain_labels,
            task_specs,
            domain_specs,
        })
    }

    pub fn n_samples(&self) -> usize {
        self.features.nrows()
    }

    pub fn n_features(&self) -> usize {
        self.features.ncols()
    }

    pub fn n_tasks(&self) -> usize {
        self.task_specs.len()
    }

    pub fn n_domains(&self) -> usize {
        self.domain_specs.len()
    }

    pub fn features(&self) -> &Array2<f64> {
        &self.features
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn task_labels(&self) -> &[Vec<usize>] {
        &self.task_labels
    }

    pub fn domain_labels(&self) -> &[DomainColumn] {
        &self.domain_labels
    }

    pub fn task_specs(&self) -> &[TaskSpec] {
        &self.task_specs
    }

    pub fn domain_specs(&self) -> &[DomainSpec] {
        &self.domain_specs
    }

    /// Returns the same labels with a replaced feature matrix of equal shape.
    pub fn with_features(&self, features: Array2<f64>) -> Result<Self, DataError> {
        if features.dim() != self.features.dim() {
            return Err(DataError::InvalidSpec(format!(
                "feature shape {:?} does not match {:?}",
                features.dim(),
                self.features.dim()
            )));
        }
        Self::new(
            features,
            self.feature_names.clone(),
            self.task_labels.clone(),
            self.domain_labels.clone(),
            self.task_specs.clone(),
            self.domain_specs.clone(),
        )
    }

    /// Same labels over a different set of columns, e.g. a latent representation.
    pub fn with_representation(&self, features: Array2<f64>, names: Vec<String>) -> Result<Self, DataError> {
        if features.nrows() != self.n_samples() {
            return Err(DataError::InvalidSpec(format!(
                "{} representation rows for {} samples",
                features.nrows(),
                self.n_samples()
            )));
        }
        Self::new(
            features,
            names,
            self.task_labels.clone(),
            self.domain_labels.clone(),
            self.task_specs.clone(),
            self.domain_specs.clone(),
        )
    }

    /// Rows `idx` in the given order.
    pub fn subset(&self, idx: &[usize]) -> Dataset {
        Dataset {
            features: self.features.select(Axis(0), idx),
            feature_names: self.feature_names.clone(),
            task_labels: self
                .task_labels
                .iter()
                .map(|c| idx.iter().map(|&i| c[i]).collect())
                .collect(),
            domain_labels: self.domain_labels.iter().map(|c| c.select(idx)).collect(),
            task_specs: self.task_specs.clone(),
            domain_specs: self.domain_specs.clone(),
        }
    }

    /// Indices of samples whose categorical domain `domain` takes one of `instances`.
    pub fn indices_with_instances(&self, domain: usize, instances: &[usize]) -> Result<Vec<usize>, DataError> {
        let col = self
            .domain_labels
            .get(domain)
            .and_then(|c| c.as_categorical())
            .ok_or_else(|| DataError::InvalidSpec(format!("domain {domain} is not categorical")))?;
        Ok(col
            .iter()
            .enumerate()
            .filter(|(_, v)| instances.contains(v))
            .map(|(i, _)| i)
            .collect())
    }

    /// Per-class sample counts for task `task`.
    pub fn class_counts(&self, task: usize) -> Vec<usize> {
        let mut counts = vec![0; self.task_specs[task].n_classes];
        for &y in &self.task_labels[task] {
            counts[y] += 1;
        }
        counts
    }

    /// Appends domain columns (used by the shift generator).
    pub fn with_extra_domains(
        &self,
        features: Array2<f64>,
        columns: Vec<DomainColumn>,
        specs: Vec<DomainSpec>,
    ) -> Result<Self, DataError> {
        let mut labels = self.domain_labels.clone();
        labels.extend(columns);
        let mut all_specs = self.domain_specs.clone();
        all_specs.extend(specs);
        Self::new(
            features,
            self.feature_names.clone(),
            self.task_labels.clone(),
            labels,
            self.task_specs.clone(),
            all_specs,
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn toy() -> Dataset {
        Dataset::new(
            array![[1.0, 2.0], [3.0, 4.0], [5.0, 6.0]],
            vec!["a".into(), "b".into()],
            vec![vec![0, 1, 1]],
            vec![DomainColumn::Categorical(vec![0, 1, 0])],
            vec![TaskSpec::new("t", 2)],
            vec![DomainSpec::categorical("d", 2)],
        )
        .unwrap()
    }

    #[test]
    fn subset_keeps_label_alignment() {
        let d = toy().subset(&[2, 0]);
        assert_eq!(d.features()[[0, 0]], 5.0);
        assert_eq!(d.task_labels()[0], vec![1, 0]);
        assert_eq!(d.domain_labels()[0], DomainColumn::Categorical(vec![0, 0]));
    }

    #[test]
    fn representation_may_change_width_not_rows() {
        let d = toy();
        let z = d.with_representation(array![[1.0], [2.0], [3.0]], vec!["z0".into()]).unwrap();
        assert_eq!(z.n_features(), 1);
        assert_eq!(z.task_labels(), d.task_labels());
        assert!(d.with_representation(array![[1.0]], vec!["z0".into()]).is_err());
    }

    #[test]
    fn rejects_non_finite_and_reports_row() {
        let err = Dataset::new(
            array![[1.0], [f64::NAN], [f64::INFINITY]],
            vec!["a".into()],
            vec![],
            vec![],
            vec![],
            vec![],
        )
        .unwrap_err();
        assert!(matches!(err, DataError::NonFinite { first_row: 1, count: 2 }));
    }

    #[test]
    fn rejects_out_of_range_labels() {
        let err = Dataset::new(
            array![[1.0], [2.0]],
            vec!["a".into()],
            vec![vec![0, 3]],
            vec![],
            vec![TaskSpec::new("t", 2)],
            vec![],
        )
        .unwrap_err();
        assert!(matches!(err, DataError::LabelOutOfRange { row: 1, value: 3, .. }));
    }

    #[test]
    fn spec_invariants() {
        assert!(TaskSpec::new("t", 1).validate().is_err());
        let mut t = TaskSpec::new("t", 2);
        t.class_weights = Some(vec![1.0, 0.0]);
        assert!(t.validate().is_err());
        assert!(DomainSpec::categorical("d", 1).validate().is_err());
        assert!(DomainSpec::continuous_with("c", 1, Binning::Uniform).validate().is_err());
    }
}
