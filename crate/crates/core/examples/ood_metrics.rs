//! Tour of the distribution metrics: 1-D Wasserstein-2 and Jensen-Shannon
//! on shifted Gaussians, then supremum variation of dataset A with and
//! without its far target instance.

use std::error::Error;

use disae::metrics::{
    axis_variation, jsd, model_variation, wasserstein2_1d, Dissimilarity, JsdConfig, LabelSet, VariationOptions,
};
use disae::data::NormStats;
use disae::rng::seeded;
use disae::synth::{generate_standard, StandardDataset};
use rand_distr::{Distribution, Normal};

fn main() -> Result<(), Box<dyn Error>> {
    let mut rng = seeded(3);
    let base: Vec<f64> = Normal::new(0.0, 1.0)?.sample_iter(&mut rng).take(4000).collect();
    println!("shift   W2      JSD");
    for shift in [0.0, 0.5, 1.0, 2.0, 4.0] {
        let moved: Vec<f64> = Normal::new(shift, 1.0)?.sample_iter(&mut rng).take(4000).collect();
        println!(
            "{shift:<7.1} {:<7.3} {:.3}",
            wasserstein2_1d(&base, &moved)?,
            jsd(&base, &moved, &JsdConfig::default())?
        );
    }

    let g = generate_standard(StandardDataset::A, 0, None)?;
    let ds = &g.dataset;
    let x = NormStats::fit(ds.features()).apply(ds.features())?;
    let ds = ds.with_features(x)?;
    for (label, ids) in [("sources 0,1", vec![0, 1]), ("sources + instance 4", vec![0, 1, 3])] {
        let part = ds.subset(&ds.indices_with_instances(0, &ids)?);
        let labels = LabelSet::from_dataset(&part, None)?;
        for rho in [Dissimilarity::Wasserstein2, Dissimilarity::jsd()] {
            let opts = VariationOptions::with_rho(rho);
            let r = model_variation(part.features(), &labels, &opts)?;
            let axes = axis_variation(part.features(), &labels, &rho, opts.min_cell)?;
            let top = axes.iter().cloned().fold(0.0, f64::max);
            println!("{label:<22} {:<12} V^sup {:.3} (best axis {top:.3})", rho.name(), r.v_sup);
        }
    }
    Ok(())
}
