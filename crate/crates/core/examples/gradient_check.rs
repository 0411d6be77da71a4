//! Compares the analytic gradients of a small Dis-AE with central finite
//! differences. Encoder parameters follow the reversed domain gradient, so
//! their reference objective subtracts `lambda` times the domain losses.

use std::error::Error;

use disae::model::{Batch, DisAEConfig, DisAEModel, EpochSelection, LossBreakdown};
use disae::nn::PlateauConfig;
use disae::rng::seeded;
use ndarray::Array2;
use rand::Rng;

fn objective(l: &LossBreakdown, encoder: bool, lambda: f64) -> f64 {
    let domain: f64 = l.per_domain.iter().sum();
    l.encoder_objective() + if encoder { -lambda * domain } else { domain }
}

fn main() -> Result<(), Box<dyn Error>> {
    let cfg = DisAEConfig {
        input_dim: 5,
        encoder_hidden: vec![6],
        latent_dim: 3,
        head_hidden: Some(4),
        domain_head_hidden: Some(5),
        task_classes: vec![3],
        domain_classes: vec![2, 4],
        alpha: 1.0,
        beta: 1.0,
        lambda: 0.8,
        l2: 0.0,
        lr: 1e-3,
        batch_size: 8,
        max_epochs: 1,
        seed: 11,
        balance_task: None,
        plateau: PlateauConfig::default(),
        selection: EpochSelection::default(),
    };
    let mut model = DisAEModel::new(cfg.clone())?;
    let mut rng = seeded(5);
    let batch = Batch {
        x: Array2::from_shape_fn((8, 5), |_| rng.random_range(-2.0..2.0)),
        tasks: vec![(0..8).map(|_| rng.random_range(0..3)).collect()],
        domains: vec![(0..8).map(|_| rng.random_range(0..2)).collect(), (0..8).map(|_| rng.random_range(0..4)).collect()],
    };

    let (_, grads) = model.loss_and_grads(&batch)?;
    let analytic = grads.flatten();
    let params = model.flat_params();
    let n_enc = model.n_encoder_params();
    let h = 1e-6;
    let mut worst: f64 = 0.0;
    for i in 0..params.len() {
        let mut p = params.clone();
        p[i] += h;
        model.set_flat_params(&p)?;
        let up = objective(&model.compute_loss(&batch)?, i < n_enc, cfg.lambda);
        p[i] -= 2.0 * h;
        model.set_flat_params(&p)?;
        let down = objective(&model.compute_loss(&batch)?, i < n_enc, cfg.lambda);
        let numeric = (up - down) / (2.0 * h);
        let rel = (numeric - analytic[i]).abs() / (numeric.abs() + analytic[i].abs()).max(1e-8);
        worst = worst.max(rel);
    }
    model.set_flat_params(&params)?;
    println!("{} parameters, worst relative error {worst:.2e}", params.len());
    Ok(())
}
