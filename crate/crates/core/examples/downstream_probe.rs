//! Fits a probe classifier on source-instance latents and reports its
//! accuracy on the shifted target instances, for raw features and for the
//! latent space of a trained Dis-AE.

use std::error::Error;

use disae::data::{split_off_fraction, NormStats};
use disae::harness::{downstream_probe, instance_label, ProbeConfig, ProbeSplit};
use disae::model::{train_model, DisAEConfig};
use disae::synth::{generate_standard, StandardDataset};

fn main() -> Result<(), Box<dyn Error>> {
    let g = generate_standard(StandardDataset::A, 0, None)?;
    let ds = &g.dataset;
    let source = ds.indices_with_instances(0, &[0, 1])?;
    let (train, held) = split_off_fraction(&source, 0.2, 4);
    let stats = NormStats::fit(ds.subset(&train).features());
    let norm = ds.with_features(stats.apply(ds.features())?)?;

    let cfg = DisAEConfig {
        max_epochs: 60,
        ..DisAEConfig::for_dataset(ds)
    };
    let model = train_model(&norm.subset(&train), None, &cfg)?.model;

    let mut eval = vec![("source".to_string(), held)];
    for target in 2..5 {
        eval.push((instance_label(target), ds.indices_with_instances(0, &[target])?));
    }
    let split = ProbeSplit { train, eval };
    let z = model.encode(norm.features())?;
    for (name, rep) in [("raw", norm.features()), ("dis-ae", &z)] {
        let groups = downstream_probe(rep, &ds.task_labels()[0], 2, &split, &ProbeConfig::default())?;
        let line: Vec<String> = groups.iter().map(|g| format!("{} {:.3}", g.name, g.accuracy)).collect();
        println!("{name:<7} {}", line.join("  "));
    }
    Ok(())
}
