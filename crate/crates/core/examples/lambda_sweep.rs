//! A small hyperparameter grid over the adversarial weight and latent width,
//! ranked by mean selection score.

use std::collections::BTreeMap;
use std::error::Error;

use disae::harness::{sweep, ExperimentPlan, ModelKind, SweepGrid};
use disae::synth::{generate_standard, StandardDataset};
use serde_json::json;

fn main() -> Result<(), Box<dyn Error>> {
    let g = generate_standard(StandardDataset::A, 0, Some(4000))?;
    let mut plan = ExperimentPlan::new(ModelKind::DisAe, &g.dataset);
    plan.source_instances = Some(vec![0, 1]);
    plan.folds = 3;
    plan.model.max_epochs = 40;
    let axes = BTreeMap::from([
        ("lambda".to_string(), vec![json!(0.0), json!(1.0), json!(5.0)]),
        ("latent_dim".to_string(), vec![json!(6), json!(12)]),
    ]);
    let rows = sweep(&g.dataset, &plan, &SweepGrid { axes })?;
    for r in &rows {
        let params: Vec<String> = r.params.iter().map(|(k, v)| format!("{k}={v}")).collect();
        println!(
            "#{} {:<24} acc {:.3} var {:.3} rec {:.3} score {:.3}",
            r.rank,
            params.join(" "),
            r.mean.accuracy,
            r.mean.variation,
            r.mean.reconstruction,
            r.mean.score
        );
    }
    Ok(())
}
