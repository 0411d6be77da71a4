use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::{DataError, Dataset};
use crate::rng::{derive_seed, seeded};

/// Fraction of each fold's training part held back for validation.
pub const DEFAULT_VAL_FRACTION: f64 = 0.1;

/// k-fold assignment of sample indices, stratified on the first task.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitPlan {
    pub k: usize,
    pub seed: u64,
    pub val_fraction: f64,
    /// `fold_of[i]` is the held-out fold of sample `i`.
    pub fold_of: Vec<usize>,
}

impl SplitPlan {
    pub fn n_samples(&self) -> usize {
        self.fold_of.len()
    }

    /// Held-out indices of fold `f`, ascending.
    pub fn held_out(&self, f: usize) -> Vec<usize> {
        (0..self.n_samples()).filter(|&i| self.fold_of[i] == f).collect()
    }

    /// Indices used for training when fold `f` is held out, ascending.
    pub fn training(&self, f: usize) -> Vec<usize> {
        (0..self.n_samples()).filter(|&i| self.fold_of[i] != f).collect()
    }

    /// Splits the training part of fold `f` into (fit, validation) index sets.
    pub fn fit_validation(&self, f: usize) -> (Vec<usize>, Vec<usize>) {
        split_off_fraction(&self.training(f), self.val_fraction, derive_seed(self.seed, &[f as u64, 1]))
    }
}

/// Shuffles `idx` and moves `fraction` of it (at least one element when
/// `idx.len() > 1`) into the second returned set. Both outputs are sorted.
pub fn split_off_fraction(idx: &[usize], fraction: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut shuffled = idx.to_vec();
    shuffled.shuffle(&mut seeded(seed));
    let mut n_val = (idx.len() as f64 * fraction).round() as usize;
    if fraction > 0.0 && idx.len() > 1 {
        n_val = n_val.clamp(1, idx.len() - 1);
    }
    let mut val = shuffled.split_off(idx.len() - n_val);
    shuffled.sort_unstable();
    val.sort_unstable();
    (shuffled, val)
}

/// Assigns every sample to one of `k` folds. Within each class of the
/// first task the samples are shuffled and dealt round-robin, continuing
/// the dealing position across classes so fold sizes differ by at most one.
pub fn make_folds(dataset: &Dataset, k: usize, seed: u64) -> Result<SplitPlan, DataError> {
    let n = dataset.n_samples();
    if k < 2 {
        return Err(DataError::InvalidSpec(format!("k-fold needs k >= 2, got {k}")));
    }
    if k > n {
        return Err(DataError::InvalidSpec(format!("cannot make {k} folds from {n} samples")));
    }
    let strata: Vec<Vec<usize>> = match dataset.task_labels().first() {
        Some(labels) => {
            let n_classes = dataset.task_specs()[0].n_classes;
            let mut groups = vec![Vec::new(); n_classes];
            for (i, &y) in labels.iter().enumerate() {
                groups[y].push(i);
            }
            groups
        }
        None => vec![(0..n).collect()],
    };
    let mut rng = seeded(seed);
    let mut fold_of = vec![0; n];
    let mut next = 0;
    for mut group in strata {
        group.shuffle(&mut rng);
        for i in group {
            fold_of[i] = next % k;
            next += 1;
        }
    }
    Ok(SplitPlan {
        k,
        seed,
        val_fraction: DEFAULT_VAL_FRACTION,
        fold_of,
    })
}
