//! Generates the four standard synthetic datasets, prints their layout and
//! writes dataset A to disk with its metadata sidecar.

use std::error::Error;

use disae::data::{load_dataset, meta_path, save_dataset, DomainColumn};
use disae::synth::{generate_standard, StandardDataset};

fn main() -> Result<(), Box<dyn Error>> {
    for name in StandardDataset::ALL {
        // Many Affines is large; a reduced size is enough to look at it
        let scale = (name == StandardDataset::ManyAffines).then_some(7_000);
        let g = generate_standard(name, 0, scale)?;
        let ds = &g.dataset;
        println!("{name}: {} rows x {} features", ds.n_samples(), ds.n_features());
        for (t, spec) in ds.task_specs().iter().enumerate() {
            println!("  task {:<10} classes {:?}", spec.name, ds.class_counts(t));
        }
        for (spec, col) in ds.domain_specs().iter().zip(ds.domain_labels()) {
            match col {
                DomainColumn::Categorical(ids) => {
                    let mut counts = vec![0usize; spec.n_classes()];
                    ids.iter().for_each(|&i| counts[i] += 1);
                    if counts.len() > 8 {
                        println!("  domain {:<8} {} instances of ~{} rows", spec.name, counts.len(), counts[0]);
                    } else {
                        println!("  domain {:<8} instances {counts:?}", spec.name);
                    }
                }
                DomainColumn::Continuous(v) => {
                    let lo = v.iter().cloned().fold(f64::INFINITY, f64::min);
                    let hi = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                    println!("  domain {:<8} continuous in [{lo:.2}, {hi:.2}]", spec.name);
                }
            }
        }
        if let Some(ranks) = g.provenance.instance_ranks() {
            if ranks.len() <= 8 {
                println!("  distance ranks {ranks:?}");
            }
        }
    }

    let dir = std::env::temp_dir().join("disae-example-data");
    std::fs::create_dir_all(&dir)?;
    let path = dir.join("a.csv");
    let g = generate_standard(StandardDataset::A, 0, None)?;
    save_dataset(&g.dataset, &g.meta(), &path)?;
    let (back, _) = load_dataset(&path)?;
    assert_eq!(back.n_samples(), g.dataset.n_samples());
    println!("wrote {} and {}", path.display(), meta_path(&path).display());
    Ok(())
}
