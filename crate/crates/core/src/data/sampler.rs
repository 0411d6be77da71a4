use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;

use super::{DataError, Dataset};
use crate::rng::{seeded, Rng};

/// Endless stream of index batches drawn with replacement so that every
/// class of one task is equally likely in expectation (scaled by the task's
/// optional class weights).
pub struct WeightedBatchSampler {
    dist: WeightedIndex<f64>,
    batch_size: usize,
    rng: Rng,
}

impl WeightedBatchSampler {
    pub fn new(dataset: &Dataset, task: usize, batch_size: usize, seed: u64) -> Result<Self, DataError> {
        let spec = dataset
            .task_specs()
            .get(task)
            .ok_or_else(|| DataError::InvalidSpec(format!("no task {task} to balance on")))?;
        if batch_size == 0 {
            return Err(DataError::InvalidSpec("batch size must be positive".into()));
        }
        let counts = dataset.class_counts(task);
        if let Some(class) = counts.iter().position(|&c| c == 0) {
            return Err(DataError::EmptyClass {
                task: spec.name.clone(),
                class,
            });
        }
        let class_w: Vec<f64> = (0..spec.n_classes)
            .map(|c| spec.class_weights.as_ref().map_or(1.0, |w| w[c]) / counts[c] as f64)
            .collect();
        let weights: Vec<f64> = dataset.task_labels()[task].iter().map(|&y| class_w[y]).collect();
        let dist = WeightedIndex::new(&weights).map_err(|e| DataError::InvalidSpec(e.to_string()))?;
        Ok(Self {
            dist,
            batch_size,
            rng: seeded(seed),
        })
    }

    pub fn next_batch(&mut self) -> Vec<usize> {
        (0..self.batch_size).map(|_| self.dist.sample(&mut self.rng)).collect()
    }
}

impl Iterator for WeightedBatchSampler {
    type Item = Vec<usize>;

    fn next(&mut self) -> Option<Vec<usize>> {
        Some(self.next_batch())
    }
}
