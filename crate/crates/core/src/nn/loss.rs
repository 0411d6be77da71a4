use ndarray::{Array2, Axis};

use super::NnError;

/// Mean squared error over all entries, with its gradient w.r.t. `pred`.
pub fn mse(pred: &Array2<f64>, target: &Array2<f64>) -> Result<(f64, Array2<f64>), NnError> {
    if pred.dim() != target.dim() {
        return Err(NnError::Shape {
            what: "mse operands",
            expected: target.len(),
            got: pred.len(),
        });
    }
    let n = pred.len().max(1) as f64;
    let diff = pred - target;
    let loss = diff.iter().map(|d| d * d).sum::<f64>() / n;
    Ok((loss, diff * (2.0 / n)))
}

/// Row-wise softmax, numerically stabilised.
pub fn softmax(logits: &Array2<f64>) -> Array2<f64> {
    let mut p = logits.to_owned();
    for mut row in p.axis_iter_mut(Axis(0)) {
        let max = row.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        row.mapv_inplace(|v| (v - max).exp());
        let s = row.sum();
        row.mapv_inplace(|v| v / s);
    }
    p
}

/// Mean (over rows) softmax cross-entropy in nats, with its gradient
/// w.r.t. the logits.
pub fn softmax_cross_entropy(logits: &Array2<f64>, labels: &[usize]) -> Result<(f64, Array2<f64>), NnError> {
    let (n, c) = logits.dim();
    if labels.len() != n {
        return Err(NnError::Shape {
            what: "label count",
            expected: n,
            got: labels.len(),
        });
    }
    if let Some(&bad) = labels.iter().find(|&&y| y >= c) {
        return Err(NnError::LabelOutOfRange { label: bad, n_classes: c });
    }
    let mut grad = softmax(logits);
    let mut loss = 0.0;
    for (i, &y) in labels.iter().enumerate() {
        let row = logits.row(i);
        let max = row.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
        loss += lse - row[y];
        grad[[i, y]] -= 1.0;
    }
    let scale = 1.0 / n.max(1) as f64;
    grad.mapv_inplace(|g| g * scale);
    Ok((loss * scale, grad))
}

pub fn argmax_rows(x: &Array2<f64>) -> Vec<usize> {
    x.axis_iter(Axis(0))
        .map(|row| {
            row.iter()
                .enumerate()
                .fold((0, f64::NEG_INFINITY), |(bi, bv), (i, &v)| if v > bv { (i, v) } else { (bi, bv) })
                .0
        })
        .collect()
}

pub fn accuracy(pred: &[usize], labels: &[usize]) -> f64 {
    if labels.is_empty() {
        return 0.0;
    }
    pred.iter().zip(labels).filter(|(a, b)| a == b).count() as f64 / labels.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn mse_of_identical_is_zero() {
        let x = array![[1.0, 2.0], [3.0, -4.0]];
        let (l, g) = mse(&x, &x).unwrap();
        assert_eq!(l, 0.0);
        assert!(g.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn mse_is_mean_over_entries() {
        let (l, _) = mse(&array![[1.0, 0.0], [0.0, 0.0]], &Array2::zeros((2, 2))).unwrap();
        assert_eq!(l, 0.25);
    }

    #[test]
    fn uniform_logits_give_ln_c() {
        for c in 2..6 {
            let (l, _) = softmax_cross_entropy(&Array2::zeros((3, c)), &[0, 1, c - 1]).unwrap();
            assert!((l - (c as f64).ln()).abs() < 1e-12);
        }
    }

    #[test]
    fn hand_softmax_case() {
        let (l, _) = softmax_cross_entropy(&array![[3f64.ln(), 0.0]], &[0]).unwrap();
        assert!((l - -(0.75f64).ln()).abs() < 1e-12);
        assert!((l - 0.2877).abs() < 1e-4);
    }

    #[test]
    fn label_out_of_range() {
        assert!(matches!(
            softmax_cross_entropy(&Array2::zeros((1, 2)), &[2]),
            Err(NnError::LabelOutOfRange { label: 2, n_classes: 2 })
        ));
    }

    #[test]
    fn cross_entropy_gradient_matches_finite_differences() {
        let logits = array![[0.3, -1.2, 2.0], [1.0, 0.5, -0.5]];
        let labels = [2, 0];
        let (_, g) = softmax_cross_entropy(&logits, &labels).unwrap();
        let h = 1e-6;
        for i in 0..2 {
            for j in 0..3 {
                let mut p = logits.clone();
                p[[i, j]] += h;
                let mut m = logits.clone();
                m[[i, j]] -= h;
                let fd = (softmax_cross_entropy(&p, &labels).unwrap().0 - softmax_cross_entropy(&m, &labels).unwrap().0)
                    / (2.0 * h);
                assert!((fd - g[[i, j]]).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn argmax_and_accuracy() {
        let p = argmax_rows(&array![[0.1, 0.9], [2.0, -1.0], [0.0, 0.0]]);
        assert_eq!(p, vec![1, 0, 0]);
        assert_eq!(accuracy(&p, &[1, 1, 0]), 2.0 / 3.0);
    }
}
