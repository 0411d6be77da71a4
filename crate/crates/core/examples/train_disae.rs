//! Trains a Dis-AE and a plain autoencoder on the two source instances of
//! dataset A and scores both on rows neither model has seen.

use std::error::Error;

use disae::data::{split_off_fraction, NormStats};
use disae::harness::{ModelKind, Probe, ProbeConfig};
use disae::metrics::{model_variation, selection_score, LabelSet, VariationOptions};
use disae::model::{train_model, DisAEConfig};
use disae::synth::{generate_standard, StandardDataset};

fn main() -> Result<(), Box<dyn Error>> {
    let g = generate_standard(StandardDataset::A, 0, None)?;
    let source = g.dataset.subset(&g.dataset.indices_with_instances(0, &[0, 1])?);
    let all: Vec<usize> = (0..source.n_samples()).collect();
    let (train_rows, held_rows) = split_off_fraction(&all, 0.2, 1);
    let (fit_rows, val_rows) = split_off_fraction(&train_rows, 0.1, 2);

    let stats = NormStats::fit(source.subset(&fit_rows).features());
    let norm = source.with_features(stats.apply(source.features())?)?;
    let (fit, val, held) = (norm.subset(&fit_rows), norm.subset(&val_rows), norm.subset(&held_rows));

    let opts = VariationOptions::default();
    let labels = LabelSet::from_dataset(&held, None)?;
    let raw = model_variation(held.features(), &labels, &opts)?.v_sup;
    println!("raw V^sup on held-out rows: {raw:.3}");

    let template = DisAEConfig {
        max_epochs: 60,
        ..DisAEConfig::for_dataset(&g.dataset)
    };
    for kind in [ModelKind::DisAe, ModelKind::Vanilla] {
        let cfg = kind.resolve(&template, &g.dataset);
        let t = std::time::Instant::now();
        let trained = train_model(&fit, Some(&val), &cfg)?;
        let h = &trained.history;
        let last = h.epochs.last().expect("at least one epoch");
        println!(
            "{}: {} epochs in {:.1}s, best epoch {}, final lr {:.1e}",
            kind.label(),
            h.epochs.len(),
            t.elapsed().as_secs_f64(),
            h.best_epoch,
            last.lr
        );
        // a plain autoencoder has no heads, so accuracy comes from a probe on its latent space
        let external = match kind {
            ModelKind::DisAe => None,
            ModelKind::Vanilla => {
                let probe = Probe::fit(
                    &trained.model.encode(fit.features())?,
                    &fit.task_labels()[0],
                    2,
                    &ProbeConfig::default(),
                )?;
                Some(vec![probe.accuracy(&trained.model.encode(held.features())?, &held.task_labels()[0])?])
            }
        };
        let r = selection_score(&trained.model, &held, &labels, &opts, raw, external.as_deref())?;
        println!(
            "  accuracy {:.3}  variation {:.3}  reconstruction {:.3}  score {:.3}",
            r.accuracy, r.variation, r.reconstruction, r.score
        );
    }
    Ok(())
}
