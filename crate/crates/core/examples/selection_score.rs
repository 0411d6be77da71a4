//! The selection score combines task accuracy, normalised domain variation
//! and relative reconstruction error. This ranks a few hand-made candidates
//! and then the folds of a short cross-validated run.

use std::error::Error;

use disae::harness::{run_experiment, ExperimentPlan, ModelKind};
use disae::metrics::ScoreReport;
use disae::synth::{generate_standard, StandardDataset};

fn main() -> Result<(), Box<dyn Error>> {
    let candidates = [
        ("accurate and invariant", ScoreReport::from_terms(vec![0.98], 0.003, 0.08)),
        ("accurate, domain-aware", ScoreReport::from_terms(vec![0.97], 1.011, 0.05)),
        ("invariant, poor recon", ScoreReport::from_terms(vec![0.90], 0.05, 0.60)),
    ];
    let mut ranked: Vec<_> = candidates.iter().collect();
    ranked.sort_by(|a, b| b.1.score.total_cmp(&a.1.score));
    for (name, r) in ranked {
        println!("{name:<24} acc {:.3} var {:.3} rec {:.3} -> {:.3}", r.accuracy, r.variation, r.reconstruction, r.score);
    }

    let g = generate_standard(StandardDataset::A, 0, Some(4000))?;
    let mut plan = ExperimentPlan::new(ModelKind::DisAe, &g.dataset);
    plan.source_instances = Some(vec![0, 1]);
    plan.folds = 3;
    plan.model.max_epochs = 40;
    let result = run_experiment(&g.dataset, &plan)?;
    for f in &result.folds {
        println!(
            "fold {}: acc {:.3} var {:.3} rec {:.3} score {:.3}",
            f.fold, f.report.accuracy, f.report.variation, f.report.reconstruction, f.report.score
        );
    }
    println!("mean score {:.3} +/- {:.3}", result.mean.score, result.score_std);
    Ok(())
}
