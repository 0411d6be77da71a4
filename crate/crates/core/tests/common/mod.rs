//! Independent oracles shared by the integration suites and the acceptance run.
#![allow(dead_code)]

use disae::metrics::{jsd, jsd_discrete, wasserstein2_1d, JsdConfig};
use disae::model::{Batch, DisAEConfig, DisAEModel, EpochSelection, LossBreakdown};
use disae::nn::PlateauConfig;
use disae::rng::seeded;
use ndarray::Array2;
use proptest::prelude::*;
use proptest::test_runner::{Config, TestRunner};
use rand::Rng;

/// Visits every permutation of `idx` (Heap's algorithm).
fn permutations(idx: &mut Vec<usize>, k: usize, visit: &mut dyn FnMut(&[usize])) {
    if k <= 1 {
        visit(idx);
        return;
    }
    for i in 0..k - 1 {
        permutations(idx, k - 1, visit);
        if k % 2 == 0 {
            idx.swap(i, k - 1);
        } else {
            idx.swap(0, k - 1);
        }
    }
    permutations(idx, k - 1, visit);
}

/// W2 between equal-size samples as the cheapest of all n! matchings.
/// For uniform weights an optimal coupling is always a permutation.
pub fn brute_force_w2(p: &[f64], q: &[f64]) -> f64 {
    assert_eq!(p.len(), q.len());
    let mut best = f64::INFINITY;
    let mut idx: Vec<usize> = (0..q.len()).collect();
    let n = idx.len();
    permutations(&mut idx, n, &mut |perm| {
        let cost: f64 = p.iter().zip(perm).map(|(a, &j)| (a - q[j]).powi(2)).sum();
        best = best.min(cost);
    });
    (best / p.len() as f64).sqrt()
}

/// Largest |W2 - brute force| over `cases` random equal-size sets, n <= 6.
/// Every third case draws small integers so ties occur.
pub fn w2_brute_force_gap(cases: usize, seed: u64) -> f64 {
    let mut rng = seeded(seed);
    let mut worst: f64 = 0.0;
    for c in 0..cases {
        let n = rng.random_range(1..=6);
        let draw = |rng: &mut disae::rng::Rng| -> f64 {
            if c % 3 == 0 {
                rng.random_range(-3..=3) as f64
            } else {
                rng.random_range(-10.0..10.0)
            }
        };
        let p: Vec<f64> = (0..n).map(|_| draw(&mut rng)).collect();
        let q: Vec<f64> = (0..n).map(|_| draw(&mut rng)).collect();
        let got = wasserstein2_1d(&p, &q).unwrap();
        worst = worst.max((got - brute_force_w2(&p, &q)).abs());
    }
    worst
}

/// JSD in bits of P = [1/2, 1/2] and Q = [1, 0] from its KL terms:
/// M = [3/4, 1/4], KL(P||M) = 1/2 log2(2/3) + 1/2 log2(2), KL(Q||M) = log2(4/3).
pub fn jsd_hand_expected() -> f64 {
    let kl_p = 0.5 * (0.5f64 / 0.75).log2() + 0.5 * (0.5f64 / 0.25).log2();
    let kl_q = (1.0f64 / 0.75).log2();
    0.5 * kl_p + 0.5 * kl_q
}

pub fn jsd_hand_computed() -> f64 {
    jsd_discrete(&[0.5, 0.5], &[1.0, 0.0])
}

fn sample(n: std::ops::RangeInclusive<usize>) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-50.0f64..50.0, n)
}

fn same_size_triple() -> impl Strategy<Value = (Vec<f64>, Vec<f64>, Vec<f64>)> {
    (1usize..=12).prop_flat_map(|n| (sample(n..=n), sample(n..=n), sample(n..=n)))
}

/// W2 axioms and JSD bounds on `cases` random sample sets each.
pub fn metric_properties(cases: u32) -> Result<(), String> {
    let mut runner = TestRunner::new(Config {
        cases,
        failure_persistence: None,
        ..Config::default()
    });
    runner
        .run(&same_size_triple(), |(a, b, c)| {
            let ab = wasserstein2_1d(&a, &b).unwrap();
            let ba = wasserstein2_1d(&b, &a).unwrap();
            let bc = wasserstein2_1d(&b, &c).unwrap();
            let ac = wasserstein2_1d(&a, &c).unwrap();
            prop_assert!(ab >= 0.0);
            prop_assert!((ab - ba).abs() <= 1e-12 * (1.0 + ab));
            prop_assert!(ac <= ab + bc + 1e-9);
            prop_assert_eq!(wasserstein2_1d(&a, &a).unwrap(), 0.0);
            let mut sa = a.clone();
            let mut sb = b.clone();
            sa.sort_by(f64::total_cmp);
            sb.sort_by(f64::total_cmp);
            prop_assert_eq!(ab == 0.0, sa == sb);
            Ok(())
        })
        .map_err(|e| format!("w2: {e}"))?;

    let mut runner = TestRunner::new(Config {
        cases,
        failure_persistence: None,
        ..Config::default()
    });
    runner
        .run(&(sample(1..=40), sample(1..=40), 2usize..60), |(a, b, bins)| {
            let cfg = JsdConfig { bins, epsilon: 1e-12 };
            let ab = jsd(&a, &b, &cfg).unwrap();
            let ba = jsd(&b, &a, &cfg).unwrap();
            prop_assert!((0.0..=1.0).contains(&ab), "{ab}");
            prop_assert!((ab - ba).abs() < 1e-12);
            prop_assert_eq!(jsd(&a, &a, &cfg).unwrap(), 0.0);
            Ok(())
        })
        .map_err(|e| format!("jsd: {e}"))
}

/// Objective whose gradient the optimizer applies: the domain losses are
/// added for head parameters and subtracted `lambda` times for the encoder.
fn applied_objective(l: &LossBreakdown, encoder: bool, lambda: f64) -> f64 {
    let domain: f64 = l.per_domain.iter().sum();
    l.encoder_objective() + if encoder { -lambda * domain } else { domain }
}

/// A random small model (a few hundred parameters at most) and batch.
pub fn random_case(seed: u64) -> (DisAEModel, Batch) {
    let mut rng = seeded(seed);
    let input_dim = rng.random_range(2..=5);
    let encoder_hidden = (0..rng.random_range(0..=2)).map(|_| rng.random_range(2..=5)).collect();
    let task_classes: Vec<usize> = (0..rng.random_range(0..=2)).map(|_| rng.random_range(2..=3)).collect();
    let domain_classes: Vec<usize> = (0..rng.random_range(1..=2)).map(|_| rng.random_range(2..=4)).collect();
    let cfg = DisAEConfig {
        input_dim,
        encoder_hidden,
        latent_dim: rng.random_range(1..=4),
        head_hidden: Some(rng.random_range(2..=4)),
        domain_head_hidden: Some(rng.random_range(2..=5)),
        task_classes: task_classes.clone(),
        domain_classes: domain_classes.clone(),
        alpha: rng.random_range(0.2..2.0),
        beta: rng.random_range(0.2..2.0),
        lambda: rng.random_range(0.1..3.0),
        l2: 0.0,
        lr: 1e-3,
        batch_size: 8,
        max_epochs: 1,
        seed,
        balance_task: None,
        plateau: PlateauConfig::default(),
        selection: EpochSelection::default(),
    };
    let n = rng.random_range(3..=8);
    let batch = Batch {
        x: Array2::from_shape_fn((n, input_dim), |_| rng.random_range(-2.0..2.0)),
        tasks: task_classes.iter().map(|&c| (0..n).map(|_| rng.random_range(0..c)).collect()).collect(),
        domains: domain_classes.iter().map(|&c| (0..n).map(|_| rng.random_range(0..c)).collect()).collect(),
    };
    // biases start at exactly zero, which puts dead rows on relu kinks;
    // jitter every parameter so the check runs at a generic point
    let mut model = DisAEModel::new(cfg).unwrap();
    let jittered: Vec<f64> = model.flat_params().iter().map(|v| v + rng.random_range(-0.2..0.2)).collect();
    model.set_flat_params(&jittered).unwrap();
    (model, batch)
}

/// Worst per-coordinate relative error between the applied gradients and
/// central differences of the applied objective. Coordinates where both
/// are below `1e-7` in magnitude are compared absolutely.
pub fn gradient_error(seed: u64) -> f64 {
    let (mut model, batch) = random_case(seed);
    let lambda = model.config.lambda;
    let analytic = model.loss_and_grads(&batch).unwrap().1.flatten();
    let params = model.flat_params();
    let n_enc = model.n_encoder_params();
    let h = 1e-6;
    let mut worst: f64 = 0.0;
    for i in 0..params.len() {
        let mut p = params.clone();
        p[i] = params[i] + h;
        model.set_flat_params(&p).unwrap();
        let up = applied_objective(&model.compute_loss(&batch).unwrap(), i < n_enc, lambda);
        p[i] = params[i] - h;
        model.set_flat_params(&p).unwrap();
        let down = applied_objective(&model.compute_loss(&batch).unwrap(), i < n_enc, lambda);
        let numeric = (up - down) / (2.0 * h);
        let scale = numeric.abs().max(analytic[i].abs()).max(1e-7);
        worst = worst.max((numeric - analytic[i]).abs() / scale);
    }
    worst
}

pub mod persistence {
    use std::fs;
    use std::path::Path;

    use disae::data::{save_dataset, Dataset, NormStats};
    use disae::harness::{
        assess_targets, run_experiment, write_folds_csv, write_probe_csv, write_scores_csv, write_variation_csv,
        ExperimentPlan, ModelKind, PROBE_NAME,
    };
    use disae::model::{load_checkpoint, save_checkpoint, train_model, Checkpoint, DisAEConfig};
    use disae::synth::{generate_standard, StandardDataset};
    use serde_json::json;

    fn read(p: &Path) -> Vec<u8> {
        fs::read(p).unwrap()
    }

    /// CSV and sidecar bytes of a generated dataset.
    pub fn dataset_bytes(name: StandardDataset, seed: u64, scale: Option<usize>) -> (Vec<u8>, Vec<u8>) {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("d.csv");
        let g = generate_standard(name, seed, scale).unwrap();
        save_dataset(&g.dataset, &g.meta(), &p).unwrap();
        (read(&p), read(&p.with_extension("meta.json")))
    }

    pub fn trained_checkpoint() -> Checkpoint {
        let g = generate_standard(StandardDataset::B, 2, Some(800)).unwrap();
        let stats = NormStats::fit(g.dataset.features());
        let ds = g.dataset.with_features(stats.apply(g.dataset.features()).unwrap()).unwrap();
        let cfg = DisAEConfig {
            max_epochs: 4,
            ..DisAEConfig::for_dataset(&ds)
        };
        let mut t = train_model(&ds, None, &cfg).unwrap();
        t.model.norm = Some(stats);
        Checkpoint {
            model: t.model,
            history: t.history,
            metadata: json!({ "seed": 2 }),
        }
    }

    pub fn checkpoint_bytes(ckpt: &Checkpoint) -> Vec<u8> {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.ckpt");
        save_checkpoint(ckpt, &p).unwrap();
        read(&p)
    }

    /// Saves, loads and compares parameters, normalization, bins, history
    /// and encoder outputs bit for bit, then checks a re-save is identical.
    pub fn checkpoint_round_trip(ckpt: &Checkpoint) -> Result<(), String> {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.ckpt");
        save_checkpoint(ckpt, &p).unwrap();
        let back = load_checkpoint(&p).map_err(|e| e.to_string())?;
        let bits = |v: Vec<f64>| v.into_iter().map(f64::to_bits).collect::<Vec<_>>();
        if bits(back.model.flat_params()) != bits(ckpt.model.flat_params()) {
            return Err("parameters differ".into());
        }
        if back.model.norm != ckpt.model.norm || back.model.domain_bins != ckpt.model.domain_bins {
            return Err("normalization or bins differ".into());
        }
        if back.history != ckpt.history || back.metadata != ckpt.metadata {
            return Err("history or metadata differ".into());
        }
        let x = ndarray::Array2::from_shape_fn((5, ckpt.model.config.input_dim), |(i, j)| (i * 7 + j) as f64 * 0.37 - 2.0);
        let (za, zb) = (ckpt.model.encode(&x).unwrap(), back.model.encode(&x).unwrap());
        if za.iter().zip(zb.iter()).any(|(a, b)| a.to_bits() != b.to_bits()) {
            return Err("encoder outputs differ".into());
        }
        if checkpoint_bytes(&back) != read(&p) {
            return Err("re-saved checkpoint differs".into());
        }
        Ok(())
    }

    fn small_plan(kind: ModelKind, ds: &Dataset, workers: usize) -> ExperimentPlan {
        let mut p = ExperimentPlan::new(kind, ds);
        p.source_instances = Some(vec![0, 1]);
        p.folds = 3;
        p.repeats = 2;
        p.model.max_epochs = 4;
        p.variation.n_directions = 64;
        p.probe.epochs = 4;
        p.workers = workers;
        p
    }

    /// Bytes of the four evaluation reports of a short run on Dataset A.
    pub fn report_bytes(seed: u64, workers: usize) -> Vec<Vec<u8>> {
        let dir = tempfile::tempdir().unwrap();
        let g = generate_standard(StandardDataset::A, seed, Some(1500)).unwrap();
        let ds = &g.dataset;
        let dis = run_experiment(ds, &small_plan(ModelKind::DisAe, ds, workers)).unwrap();
        let van = run_experiment(ds, &small_plan(ModelKind::Vanilla, ds, workers)).unwrap();
        let mut var = Vec::new();
        let mut probe = Vec::new();
        for (i, r) in [&dis, &van].into_iter().enumerate() {
            let a = assess_targets(ds, r, i == 0).unwrap();
            var.extend(a.variation);
            probe.extend(a.probe);
        }
        let names = ["scores.csv", "folds.csv", "variation.csv", "probe.csv"].map(|n| dir.path().join(n));
        write_scores_csv(&names[0], "A", &[&dis, &van]).unwrap();
        write_folds_csv(&names[1], &[&dis, &van]).unwrap();
        write_variation_csv(&names[2], &var).unwrap();
        write_probe_csv(&names[3], &probe, PROBE_NAME).unwrap();
        names.iter().map(|p| read(p)).collect()
    }
}
