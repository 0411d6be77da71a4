mod common;

use common::{brute_force_w2, jsd_hand_computed, jsd_hand_expected, metric_properties, w2_brute_force_gap};
use disae::metrics::{feature_variation, model_variation, LabelSet, VariationOptions};
use disae::rng::seeded;
use ndarray::Array2;
use rand::Rng;

#[test]
fn w2_matches_brute_force_on_small_sets() {
    let gap = w2_brute_force_gap(1000, 1);
    assert!(gap <= 1e-9, "{gap:e}");
}

#[test]
fn brute_force_oracle_hand_case() {
    // crossing pairs are never optimal: {0, 2} to {1, 3} costs 1 per point
    assert!((brute_force_w2(&[0.0, 2.0], &[3.0, 1.0]) - 1.0).abs() < 1e-15);
}

#[test]
fn jsd_hand_case() {
    let expected = jsd_hand_expected();
    assert!((expected - 0.3113).abs() < 1e-4);
    assert!((jsd_hand_computed() - expected).abs() < 1e-6);
}

#[test]
fn metric_axioms_and_bounds() {
    metric_properties(10_000).unwrap();
}

fn labelled_cloud(seed: u64, n: usize, dims: usize) -> (Array2<f64>, LabelSet) {
    let mut rng = seeded(seed);
    let domain: Vec<usize> = (0..n).map(|i| i % 3).collect();
    let task: Vec<usize> = (0..n).map(|i| (i / 3) % 2).collect();
    let x = Array2::from_shape_fn((n, dims), |(i, j)| rng.random_range(-1.0..1.0) + (domain[i] * (j + 1)) as f64 * 0.3);
    let labels = LabelSet {
        task_names: vec!["t".into()],
        tasks: vec![task],
        domain_names: vec!["d".into()],
        domains: vec![domain],
    };
    (x, labels)
}

#[test]
fn feature_variation_is_affine_invariant() {
    let (x, labels) = labelled_cloud(2, 240, 1);
    let phi: Vec<f64> = x.column(0).to_vec();
    let moved: Vec<f64> = phi.iter().map(|v| 3.7 * v - 11.0).collect();
    for rho in [disae::metrics::Dissimilarity::Wasserstein2, disae::metrics::Dissimilarity::jsd()] {
        let a = feature_variation(&phi, &labels, &rho, 2).unwrap().value;
        let b = feature_variation(&moved, &labels, &rho, 2).unwrap().value;
        assert!((a - b).abs() < 1e-9, "{a} {b}");
    }
}

#[test]
fn more_directions_never_lower_vsup() {
    let (x, labels) = labelled_cloud(3, 300, 4);
    let mut last = 0.0;
    for n in [4, 16, 64, 256] {
        let opts = VariationOptions {
            n_directions: n,
            ..VariationOptions::default()
        };
        let v = model_variation(&x, &labels, &opts).unwrap().v_sup;
        assert!(v >= last, "{n}: {v} < {last}");
        last = v;
    }
}
