use ndarray::{Array2, Axis};
use serde::{Deserialize, Serialize};

use super::{DataError, Dataset};

/// Smallest standard deviation used when scaling; constant columns map to zero.
pub const STD_FLOOR: f64 = 1e-12;

/// Per-feature mean and (population) standard deviation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormStats {
    pub means: Vec<f64>,
    pub stds: Vec<f64>,
}

impl NormStats {
    pub fn fit(x: &Array2<f64>) -> Self {
        let n = x.nrows().max(1) as f64;
        let mut means = Vec::with_capacity(x.ncols());
        let mut stds = Vec::with_capacity(x.ncols());
        for col in x.axis_iter(Axis(1)) {
            let mean = col.sum() / n;
            let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
            means.push(mean);
            stds.push(var.sqrt().max(STD_FLOOR));
        }
        Self { means, stds }
    }

    pub fn dim(&self) -> usize {
        self.means.len()
    }

    pub fn apply(&self, x: &Array2<f64>) -> Result<Array2<f64>, DataError> {
        self.check(x)?;
        let mut out = x.clone();
        for (j, mut col) in out.axis_iter_mut(Axis(1)).enumerate() {
            let (m, s) = (self.means[j], self.stds[j]);
            col.mapv_inplace(|v| (v - m) / s);
        }
        Ok(out)
    }

    pub fn invert(&self, x: &Array2<f64>) -> Result<Array2<f64>, DataError> {
        self.check(x)?;
        let mut out = x.clone();
        for (j, mut col) in out.axis_iter_mut(Axis(1)).enumerate() {
            let (m, s) = (self.means[j], self.stds[j]);
            col.mapv_inplace(|v| v * s + m);
        }
        Ok(out)
    }

    fn check(&self, x: &Array2<f64>) -> Result<(), DataError> {
        if x.ncols() != self.dim() {
            return Err(DataError::InvalidSpec(format!(
                "normalization stats cover {} features, data has {}",
                self.dim(),
                x.ncols()
            )));
        }
        Ok(())
    }
}

/// Scales each feature to zero mean and unit std. Stats are fitted on
/// `dataset` unless precomputed ones (e.g. from a training split) are given.
pub fn normalize(dataset: &Dataset, stats: Option<&NormStats>) -> Result<(Dataset, NormStats), DataError> {
    let stats = match stats {
        Some(s) => s.clone(),
        None => NormStats::fit(dataset.features()),
    };
    let x = stats.apply(dataset.features())?;
    Ok((dataset.with_features(x)?, stats))
}

pub fn denormalize(dataset: &Dataset, stats: &NormStats) -> Result<Dataset, DataError> {
    dataset.with_features(stats.invert(dataset.features())?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{DomainColumn, DomainSpec, TaskSpec};
    use ndarray::array;
    use proptest::prelude::*;

    fn ds(x: Array2<f64>) -> Dataset {
        let k = x.ncols();
        Dataset::new(x, (0..k).map(|j| format!("f{j}")).collect(), vec![], vec![], vec![], vec![]).unwrap()
    }

    #[test]
    fn two_point_column() {
        let (d, s) = normalize(&ds(array![[2.0], [4.0]]), None).unwrap();
        assert_eq!(s.means, vec![3.0]);
        assert_eq!(s.stds, vec![1.0]);
        assert_eq!(d.features().column(0).to_vec(), vec![-1.0, 1.0]);
    }

    #[test]
    fn constant_column_maps_to_zero() {
        let (d, s) = normalize(&ds(array![[5.0], [5.0], [5.0]]), None).unwrap();
        assert_eq!(s.stds, vec![STD_FLOOR]);
        assert!(d.features().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn normalized_data_is_a_fixed_point() {
        let (d, _) = normalize(&ds(array![[1.0, 10.0], [2.0, -3.0], [7.0, 0.5], [0.0, 2.0]]), None).unwrap();
        let (d2, s2) = normalize(&d, None).unwrap();
        for (a, b) in d.features().iter().zip(d2.features()) {
            assert!((a - b).abs() < 1e-9);
        }
        assert!(s2.means.iter().all(|m| m.abs() < 1e-9));
    }

    #[test]
    fn precomputed_stats_are_used() {
        let train = ds(array![[0.0], [2.0]]);
        let (_, s) = normalize(&train, None).unwrap();
        let (test, _) = normalize(&ds(array![[4.0]]), Some(&s)).unwrap();
        assert_eq!(test.features()[[0, 0]], 3.0);
    }

    #[test]
    fn labels_survive_normalization() {
        let d = Dataset::new(
            array![[1.0], [3.0]],
            vec!["f".into()],
            vec![vec![1, 0]],
            vec![DomainColumn::Continuous(vec![0.5, 0.7])],
            vec![TaskSpec::new("t", 2)],
            vec![DomainSpec::continuous("c")],
        )
        .unwrap();
        let (n, _) = normalize(&d, None).unwrap();
        assert_eq!(n.task_labels(), d.task_labels());
        assert_eq!(n.domain_labels(), d.domain_labels());
    }

    proptest! {
        #[test]
        fn round_trip_and_moments(rows in prop::collection::vec(prop::collection::vec(-1e3f64..1e3, 3), 2..40)) {
            let n = rows.len();
            let x = Array2::from_shape_vec((n, 3), rows.concat()).unwrap();
            let (d, s) = normalize(&ds(x.clone()), None).unwrap();
            let back = denormalize(&d, &s).unwrap();
            for (a, b) in back.features().iter().zip(x.iter()) {
                prop_assert!((a - b).abs() <= 1e-9 * (1.0 + b.abs()));
            }
            for (j, col) in d.features().axis_iter(Axis(1)).enumerate() {
                let mean = col.sum() / n as f64;
                prop_assert!(mean.abs() < 1e-9);
                if s.stds[j] > 1e-6 {
                    let var = col.iter().map(|v| v * v).sum::<f64>() / n as f64;
                    prop_assert!((var - 1.0).abs() < 1e-9);
                }
            }
        }
    }
}
