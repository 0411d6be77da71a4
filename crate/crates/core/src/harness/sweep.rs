use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::experiment::{run_experiment, ExperimentPlan};
use super::HarnessError;
use crate::data::Dataset;
use crate::metrics::ScoreReport;
use crate::model::DisAEConfig;

/// Values to try for model-configuration keys; the sweep evaluates the full
/// Cartesian product.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SweepGrid {
    pub axes: BTreeMap<String, Vec<Value>>,
}

impl SweepGrid {
    pub fn len(&self) -> usize {
        if self.axes.is_empty() {
            0
        } else {
            self.axes.values().map(Vec::len).product()
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Every combination, the last axis varying fastest.
    pub fn combinations(&self) -> Vec<Vec<(String, Value)>> {
        let mut out: Vec<Vec<(String, Value)>> = vec![Vec::new()];
        for (key, values) in &self.axes {
            out = out
                .into_iter()
                .flat_map(|prefix| {
                    values.iter().map(move |v| {
                        let mut c = prefix.clone();
                        c.push((key.clone(), v.clone()));
                        c
                    })
                })
                .collect();
        }
        out
    }
}

/// `template` with each `(key, value)` override applied.
pub fn apply_overrides(template: &DisAEConfig, overrides: &[(String, Value)]) -> Result<DisAEConfig, HarnessError> {
    let mut json = serde_json::to_value(template).map_err(|e| HarnessError::Invalid(e.to_string()))?;
    let obj = json.as_object_mut().expect("config serialises to an object");
    for (key, value) in overrides {
        if !obj.contains_key(key) {
            return Err(HarnessError::Invalid(format!("unknown model configuration key `{key}`")));
        }
        obj.insert(key.clone(), value.clone());
    }
    serde_json::from_value(json).map_err(|e| HarnessError::Invalid(format!("invalid override: {e}")))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub rank: usize,
    pub params: Vec<(String, Value)>,
    pub mean: ScoreReport,
    pub score_std: f64,
    pub failures: usize,
}

/// Runs [`run_experiment`] for every grid point and ranks the points by
/// mean selection score (ties keep grid order).
pub fn sweep(dataset: &Dataset, plan: &ExperimentPlan, grid: &SweepGrid) -> Result<Vec<SweepRow>, HarnessError> {
    if grid.is_empty() {
        return Err(HarnessError::Invalid("sweep grid is empty".into()));
    }
    let mut rows = Vec::with_capacity(grid.len());
    for params in grid.combinations() {
        let p = ExperimentPlan {
            model: apply_overrides(&plan.model, &params)?,
            ..plan.clone()
        };
        let r = run_experiment(dataset, &p)?;
        rows.push(SweepRow {
            rank: 0,
            params,
            mean: r.mean,
            score_std: r.score_std,
            failures: r.failures.len(),
        });
    }
    rows.sort_by(|a, b| b.mean.score.total_cmp(&a.mean.score));
    for (i, r) in rows.iter_mut().enumerate() {
        r.rank = i + 1;
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn cartesian_cardinality() {
        let mut g = SweepGrid::default();
        g.axes.insert("lambda".into(), vec![json!(0.0), json!(1.0)]);
        g.axes.insert("latent_dim".into(), vec![json!(4), json!(8)]);
        let c = g.combinations();
        assert_eq!(c.len(), 4);
        assert_eq!(g.len(), 4);
        assert_eq!(c[1], vec![("lambda".into(), json!(0.0)), ("latent_dim".into(), json!(8))]);
    }

    #[test]
    fn overrides_reject_unknown_keys() {
        let base = DisAEConfig {
            input_dim: 3,
            ..serde_json::from_value(json!({
                "input_dim": 3, "encoder_hidden": [4], "latent_dim": 2, "task_classes": [2],
                "domain_classes": [2], "alpha": 1.0, "beta": 1.0, "lambda": 1.0, "l2": 0.0,
                "lr": 0.001, "batch_size": 8, "max_epochs": 1, "seed": 0
            }))
            .unwrap()
        };
        let c = apply_overrides(&base, &[("lambda".into(), json!(0.25))]).unwrap();
        assert_eq!(c.lambda, 0.25);
        assert!(apply_overrides(&base, &[("gamma".into(), json!(1))]).is_err());
        assert!(apply_overrides(&base, &[("lambda".into(), json!("x"))]).is_err());
    }
}
