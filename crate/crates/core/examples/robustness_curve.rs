//! Trains on the nearest few instances of a reduced Many Affines dataset and
//! tracks variation and accuracy on every farther instance.

use std::error::Error;

use disae::harness::{dominance_fraction, robustness_study, ModelKind, RobustnessPlan};
use disae::synth::{generate_standard, StandardDataset};

fn main() -> Result<(), Box<dyn Error>> {
    let g = generate_standard(StandardDataset::ManyAffines, 0, Some(14_000))?;
    let ranks = g.provenance.instance_ranks().expect("categorical instances");
    let mut plan = RobustnessPlan::new(&g.dataset);
    plan.source_counts = vec![2, 20];
    plan.kinds = vec![ModelKind::DisAe, ModelKind::Vanilla];
    plan.model.max_epochs = 60;
    let curves = robustness_study(&g.dataset, &ranks, &plan)?;
    for c in &curves {
        let pts: Vec<_> = c.points.iter().filter(|p| p.target_rank > 0).collect();
        let mean = |f: &dyn Fn(&disae::harness::RobustnessPoint) -> Option<f64>| {
            let v: Vec<f64> = pts.iter().filter_map(|p| f(p)).collect();
            v.iter().sum::<f64>() / v.len().max(1) as f64
        };
        println!(
            "{:<10} {:>2} sources: {} targets, mean V^sup {:.3}, mean accuracy {:.3}",
            c.model,
            c.source_count,
            pts.len(),
            mean(&|p| p.v_sup),
            mean(&|p| p.accuracy)
        );
    }
    for kind in &plan.kinds {
        let of = |n: usize| curves.iter().find(|c| c.model == kind.label() && c.source_count == n);
        if let (Some(hi), Some(lo)) = (of(20), of(2)) {
            println!("{}: 20 sources beat 2 on {:.0}% of ranks", kind.label(), 100.0 * dominance_fraction(hi, lo).unwrap_or(0.0));
        }
    }
    Ok(())
}
