//! Saves a trained model to the versioned binary checkpoint format, loads
//! it back and shows that a corrupted copy is rejected.

use std::error::Error;

use disae::data::NormStats;
use disae::model::{load_checkpoint, save_checkpoint, train_model, Checkpoint, DisAEConfig};
use disae::synth::{generate_standard, StandardDataset};
use serde_json::json;

fn main() -> Result<(), Box<dyn Error>> {
    let g = generate_standard(StandardDataset::A, 0, Some(2000))?;
    let stats = NormStats::fit(g.dataset.features());
    let ds = g.dataset.with_features(stats.apply(g.dataset.features())?)?;
    let cfg = DisAEConfig {
        max_epochs: 5,
        ..DisAEConfig::for_dataset(&ds)
    };
    let mut trained = train_model(&ds, None, &cfg)?;
    trained.model.norm = Some(stats);

    let dir = std::env::temp_dir().join("disae-example-ckpt");
    std::fs::create_dir_all(&dir)?;
    let path = dir.join("model.ckpt");
    let ckpt = Checkpoint {
        model: trained.model,
        history: trained.history,
        metadata: json!({ "note": "example" }),
    };
    save_checkpoint(&ckpt, &path)?;
    let back = load_checkpoint(&path)?;
    let same = back.model.encode(ds.features())? == ckpt.model.encode(ds.features())?;
    println!("{} bytes, {} parameters, identical latents: {same}", std::fs::metadata(&path)?.len(), back.model.n_params());

    let mut bytes = std::fs::read(&path)?;
    let last = bytes.len() - 1;
    bytes[last] ^= 0xff;
    let bad = dir.join("corrupt.ckpt");
    std::fs::write(&bad, bytes)?;
    match load_checkpoint(&bad) {
        Ok(_) => println!("corrupt copy loaded (unexpected)"),
        Err(e) => println!("corrupt copy rejected: {e}"),
    }
    Ok(())
}
