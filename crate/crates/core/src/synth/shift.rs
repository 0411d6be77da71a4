use ndarray::Array2;
use rand::seq::SliceRandom;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{allocate_counts, SynthError};
use crate::data::{Binning, Dataset, DomainColumn, DomainSpec};
use crate::rng::{derive_seed, seeded};

/// `x'_j = scale_j * x_j + offset_j` on `features`; other columns untouched.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AffineInstance {
    pub id: usize,
    pub features: Vec<usize>,
    pub scale: Vec<f64>,
    pub offset: Vec<f64>,
    /// Position (1-based) when instances are ordered by [`Self::distance`].
    pub rank: usize,
}

impl AffineInstance {
    pub fn identity(id: usize) -> Self {
        Self {
            id,
            features: Vec::new(),
            scale: Vec::new(),
            offset: Vec::new(),
            rank: id + 1,
        }
    }

    /// `||(a - 1, b)||`.
    pub fn distance(&self) -> f64 {
        self.scale
            .iter()
            .map(|a| (a - 1.0).powi(2))
            .chain(self.offset.iter().map(|b| b * b))
            .sum::<f64>()
            .sqrt()
    }

    pub fn validate(&self, n_features: usize) -> Result<(), SynthError> {
        if self.scale.len() != self.features.len() || self.offset.len() != self.features.len() {
            return Err(SynthError::InvalidPlan(format!(
                "instance {}: {} features, {} scales, {} offsets",
                self.id,
                self.features.len(),
                self.scale.len(),
                self.offset.len()
            )));
        }
        if let Some(&j) = self.features.iter().find(|&&j| j >= n_features) {
            return Err(SynthError::InvalidPlan(format!(
                "instance {} touches feature {j} of {n_features}",
                self.id
            )));
        }
        if self.scale.iter().any(|a| *a == 0.0 || !a.is_finite()) || self.offset.iter().any(|b| !b.is_finite()) {
            return Err(SynthError::InvalidPlan(format!(
                "instance {} has a zero or non-finite parameter",
                self.id
            )));
        }
        Ok(())
    }

    fn apply_row(&self, row: &mut ndarray::ArrayViewMut1<f64>) {
        for ((&j, a), b) in self.features.iter().zip(&self.scale).zip(&self.offset) {
            row[j] = a * row[j] + b;
        }
    }
}

/// How a continuous covariate `c` moves one feature.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Response {
    /// `x += coef * c`
    Linear { feature: usize, coef: f64 },
    /// `x += coef * sin(freq * c)`
    Sine { feature: usize, coef: f64, freq: f64 },
    /// `x += coef * c * tanh(x)`
    Warp { feature: usize, coef: f64 },
}

impl Response {
    pub fn feature(&self) -> usize {
        match self {
            Response::Linear { feature, .. } | Response::Sine { feature, .. } | Response::Warp { feature, .. } => *feature,
        }
    }

    fn apply(&self, x: f64, c: f64) -> f64 {
        match *self {
            Response::Linear { coef, .. } => x + coef * c,
            Response::Sine { coef, freq, .. } => x + coef * (freq * c).sin(),
            Response::Warp { coef, .. } => x + coef * c * x.tanh(),
        }
    }
}

/// One domain of a [`ShiftPlan`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ShiftDomain {
    /// Samples are split across instances in proportion to `ratios`.
    Categorical {
        name: String,
        ratios: Vec<f64>,
        instances: Vec<AffineInstance>,
    },
    /// A standard-normal covariate, optionally correlated with an earlier
    /// continuous domain of the same plan.
    Continuous {
        name: String,
        #[serde(default)]
        correlated_with: Option<(usize, f64)>,
        responses: Vec<Response>,
        n_bins: usize,
    },
}

impl ShiftDomain {
    pub fn name(&self) -> &str {
        match self {
            ShiftDomain::Categorical { name, .. } | ShiftDomain::Continuous { name, .. } => name,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ShiftPlan {
    pub domains: Vec<ShiftDomain>,
}

impl ShiftPlan {
    pub fn validate(&self, n_features: usize) -> Result<(), SynthError> {
        for (d, dom) in self.domains.iter().enumerate() {
            match dom {
                ShiftDomain::Categorical { name, ratios, instances } => {
                    if ratios.len() != instances.len() {
                        return Err(SynthError::RatioLength {
                            domain: name.clone(),
                            expected: instances.len(),
                            got: ratios.len(),
                        });
                    }
                    if instances.len() < 2 || ratios.iter().any(|r| !(r.is_finite() && *r > 0.0)) {
                        return Err(SynthError::InvalidPlan(format!(
                            "domain `{name}` needs at least 2 instances with positive ratios"
                        )));
                    }
                    for inst in instances {
                        inst.validate(n_features)?;
                    }
                }
                ShiftDomain::Continuous {
                    name,
                    correlated_with,
                    responses,
                    n_bins,
                } => {
                    if *n_bins < 2 {
                        return Err(SynthError::InvalidPlan(format!("domain `{name}` needs at least 2 bins")));
                    }
                    if let Some((other, r)) = correlated_with {
                        let ok = *other < d
                            && matches!(self.domains[*other], ShiftDomain::Continuous { .. })
                            && r.abs() <= 1.0;
                        if !ok {
                            return Err(SynthError::InvalidPlan(format!(
                                "domain `{name}` must correlate with an earlier continuous domain, |r| <= 1"
                            )));
                        }
                    }
                    if let Some(r) = responses.iter().find(|r| r.feature() >= n_features) {
                        return Err(SynthError::InvalidPlan(format!(
                            "domain `{name}` responds on feature {} of {n_features}",
                            r.feature()
                        )));
                    }
                }
            }
        }
        Ok(())
    }
}

/// Applies every domain of `plan` in order and appends one label column per
/// domain. Categorical assignments follow the declared ratios exactly and
/// are shuffled independently of the task labels.
pub fn apply_shift_plan(dataset: &Dataset, plan: &ShiftPlan, seed: u64) -> Result<Dataset, SynthError> {
    plan.validate(dataset.n_features())?;
    let n = dataset.n_samples();
    let mut x: Array2<f64> = dataset.features().clone();
    let mut columns = Vec::with_capacity(plan.domains.len());
    let mut specs = Vec::with_capacity(plan.domains.len());
    let mut covariates: Vec<Option<Vec<f64>>> = Vec::with_capacity(plan.domains.len());

    for (d, dom) in plan.domains.iter().enumerate() {
        let mut rng = seeded(derive_seed(seed, &[d as u64]));
        match dom {
            ShiftDomain::Categorical { name, ratios, instances } => {
                let counts = allocate_counts(n, ratios);
                let mut ids: Vec<usize> =
                    counts.iter().enumerate().flat_map(|(k, &m)| std::iter::repeat_n(k, m)).collect();
                ids.shuffle(&mut rng);
                for (mut row, &k) in x.rows_mut().into_iter().zip(&ids) {
                    instances[k].apply_row(&mut row);
                }
                columns.push(DomainColumn::Categorical(ids));
                specs.push(DomainSpec::categorical(name.clone(), instances.len()));
                covariates.push(None);
            }
            ShiftDomain::Continuous {
                name,
                correlated_with,
                responses,
                n_bins,
            } => {
                let fresh: Vec<f64> = (0..n).map(|_| StandardNormal.sample(&mut rng)).collect();
                let c: Vec<f64> = match correlated_with {
                    Some((other, r)) => {
                        let base = covariates[*other].as_ref().expect("validated");
                        let s = (1.0 - r * r).sqrt();
                        base.iter().zip(&fresh).map(|(b, e)| r * b + s * e).collect()
                    }
                    None => fresh,
                };
                for resp in responses {
                    let j = resp.feature();
                    for (i, &ci) in c.iter().enumerate() {
                        x[[i, j]] = resp.apply(x[[i, j]], ci);
                    }
                }
                columns.push(DomainColumn::Continuous(c.clone()));
                specs.push(DomainSpec::continuous_with(name.clone(), *n_bins, Binning::Quantile));
                covariates.push(Some(c));
            }
        }
    }
    Ok(dataset.with_extra_domains(x, columns, specs)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::TaskSpec;

    fn base(n: usize) -> Dataset {
        let x = Array2::from_shape_fn((n, 3), |(i, j)| ((i * 13 + j * 7) % 17) as f64 / 4.0);
        Dataset::new(
            x,
            vec!["a".into(), "b".into(), "c".into()],
            vec![(0..n).map(|i| i % 2).collect()],
            vec![],
            vec![TaskSpec::new("y", 2)],
            vec![],
        )
        .unwrap()
    }

    fn two_instances(second: AffineInstance) -> ShiftPlan {
        ShiftPlan {
            domains: vec![ShiftDomain::Categorical {
                name: "site".into(),
                ratios: vec![1.0, 1.0],
                instances: vec![AffineInstance::identity(0), second],
            }],
        }
    }

    #[test]
    fn counts_follow_ratios_and_labels_survive() {
        let ds = base(13000);
        let plan = ShiftPlan {
            domains: vec![ShiftDomain::Categorical {
                name: "site".into(),
                ratios: vec![5.0, 5.0, 1.0, 1.0, 1.0],
                instances: (0..5).map(AffineInstance::identity).collect(),
            }],
        };
        let out = apply_shift_plan(&ds, &plan, 3).unwrap();
        let ids = out.domain_labels()[0].as_categorical().unwrap();
        let mut counts = [0usize; 5];
        ids.iter().for_each(|&k| counts[k] += 1);
        assert_eq!(counts, [5000, 5000, 1000, 1000, 1000]);
        assert_eq!(out.task_labels(), ds.task_labels());
        assert_eq!(out.features(), ds.features());
    }

    #[test]
    fn offset_moves_the_mean() {
        let ds = base(4000);
        let shifted = AffineInstance {
            id: 1,
            features: vec![0],
            scale: vec![1.0],
            offset: vec![10.0],
            rank: 2,
        };
        let out = apply_shift_plan(&ds, &two_instances(shifted), 9).unwrap();
        let ids = out.domain_labels()[0].as_categorical().unwrap();
        let (mut before, mut after, mut m) = (0.0, 0.0, 0.0);
        for (i, &k) in ids.iter().enumerate() {
            if k == 1 {
                before += ds.features()[[i, 0]];
                after += out.features()[[i, 0]];
                m += 1.0;
            } else {
                assert_eq!(out.features().row(i), ds.features().row(i));
            }
        }
        assert!(((after - before) / m - 10.0).abs() < 1e-9);
    }

    #[test]
    fn ratio_length_mismatch() {
        let plan = ShiftPlan {
            domains: vec![ShiftDomain::Categorical {
                name: "site".into(),
                ratios: vec![1.0, 1.0, 1.0],
                instances: vec![AffineInstance::identity(0), AffineInstance::identity(1)],
            }],
        };
        assert!(matches!(
            apply_shift_plan(&base(10), &plan, 0),
            Err(SynthError::RatioLength { expected: 2, got: 3, .. })
        ));
        let bad = AffineInstance {
            id: 1,
            features: vec![5],
            scale: vec![1.0],
            offset: vec![0.0],
            rank: 2,
        };
        assert!(apply_shift_plan(&base(10), &two_instances(bad), 0).is_err());
    }

    #[test]
    fn correlated_covariates() {
        let plan = ShiftPlan {
            domains: vec![
                ShiftDomain::Continuous {
                    name: "age".into(),
                    correlated_with: None,
                    responses: vec![Response::Linear { feature: 0, coef: 1.0 }],
                    n_bins: 5,
                },
                ShiftDomain::Continuous {
                    name: "season".into(),
                    correlated_with: Some((0, 0.5)),
                    responses: vec![Response::Sine { feature: 1, coef: 1.0, freq: 1.0 }, Response::Warp { feature: 2, coef: 0.3 }],
                    n_bins: 5,
                },
            ],
        };
        let out = apply_shift_plan(&base(20000), &plan, 4).unwrap();
        let a = out.domain_labels()[0].as_continuous().unwrap();
        let b = out.domain_labels()[1].as_continuous().unwrap();
        let n = a.len() as f64;
        let r = a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>() / n;
        assert!((r - 0.5).abs() < 0.03, "{r}");
        assert!(out.domain_specs()[1].is_continuous());
    }
}
