use ndarray::{concatenate, Array2, Axis};
use serde::{Deserialize, Serialize};

use super::{model_variation, LabelSet, MetricError, VariationOptions};

/// One representation of the same samples, e.g. raw features or a latent space.
pub struct Representation<'a> {
    pub name: String,
    pub source: &'a Array2<f64>,
    pub target: &'a Array2<f64>,
}

/// One row of the per-domain variation table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReliabilityRow {
    pub representation: String,
    pub domain: String,
    pub within_source: f64,
    pub source_and_target: f64,
}

/// Per-domain `V^sup` of each representation on the source split alone and
/// on source plus target. A reliable representation keeps both columns close
/// and small.
pub fn reliability_assessment(
    representations: &[Representation<'_>],
    source_labels: &LabelSet,
    target_labels: &LabelSet,
    opts: &VariationOptions,
) -> Result<Vec<ReliabilityRow>, MetricError> {
    if target_labels.is_empty() {
        return Err(MetricError::MissingTarget);
    }
    let union_labels = source_labels.concat(target_labels)?;
    let mut rows = Vec::new();
    for rep in representations {
        if rep.target.nrows() == 0 {
            return Err(MetricError::MissingTarget);
        }
        let union = concatenate(Axis(0), &[rep.source.view(), rep.target.view()])
            .map_err(|e| MetricError::InvalidArgument(e.to_string()))?;
        for (d, name) in source_labels.domain_names.iter().enumerate() {
            let within = model_variation(rep.source, &source_labels.with_domains(&[d]), opts)?.v_sup;
            let joint = model_variation(&union, &union_labels.with_domains(&[d]), opts)?.v_sup;
            rows.push(ReliabilityRow {
                representation: rep.name.clone(),
                domain: name.clone(),
                within_source: within,
                source_and_target: joint,
            });
        }
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::{jsd, Dissimilarity, JsdConfig};

    fn labels(tasks: Vec<usize>, domain: Vec<usize>) -> LabelSet {
        LabelSet {
            task_names: vec!["t".into()],
            tasks: vec![tasks],
            domain_names: vec!["site".into()],
            domains: vec![domain],
        }
    }

    #[test]
    fn identical_source_and_target_give_equal_columns() {
        let x = Array2::from_shape_fn((60, 2), |(i, j)| ((i * 7 + j * 3) % 11) as f64 + if i % 2 == 1 { 2.0 } else { 0.0 });
        let l = labels(vec![0; 60], (0..60).map(|i| i % 2).collect());
        let opts = VariationOptions {
            rho: Dissimilarity::jsd(),
            n_directions: 16,
            min_cell: 5,
            seed: 1,
        };
        let rows = reliability_assessment(
            &[Representation {
                name: "raw".into(),
                source: &x,
                target: &x,
            }],
            &l,
            &l,
            &opts,
        )
        .unwrap();
        assert_eq!(rows.len(), 1);
        assert!((rows[0].within_source - rows[0].source_and_target).abs() < 1e-9, "{rows:?}");
    }

    #[test]
    fn toy_table_matches_hand_jsd() {
        // One feature; source instances 0 and 1 identical, target instance 2 shifted.
        let src = Array2::from_shape_vec((4, 1), vec![0.0, 1.0, 0.0, 1.0]).unwrap();
        let tgt = Array2::from_shape_vec((2, 1), vec![3.0, 4.0]).unwrap();
        let s = labels(vec![0; 4], vec![0, 0, 1, 1]);
        let t = labels(vec![0; 2], vec![2, 2]);
        let cfg = JsdConfig { bins: 4, epsilon: 1e-12 };
        let opts = VariationOptions {
            rho: Dissimilarity::Jsd(cfg),
            n_directions: 1,
            min_cell: 1,
            seed: 0,
        };
        let rows = reliability_assessment(
            &[Representation {
                name: "raw".into(),
                source: &src,
                target: &tgt,
            }],
            &s,
            &t,
            &opts,
        )
        .unwrap();
        assert_eq!(rows[0].within_source, 0.0);
        // Hand value: {0,1} vs {3,4} on the range [0,4] with 4 bins are disjoint.
        let hand = jsd(&[0.0, 1.0], &[3.0, 4.0], &cfg).unwrap();
        assert!((rows[0].source_and_target - hand).abs() < 1e-9, "{rows:?} {hand}");
        assert!((hand - 1.0).abs() < 1e-9);
    }

    #[test]
    fn missing_target_is_an_error() {
        let x = Array2::zeros((4, 1));
        let empty = Array2::zeros((0, 1));
        let s = labels(vec![0; 4], vec![0, 0, 1, 1]);
        let t = labels(vec![], vec![]);
        let res = reliability_assessment(
            &[Representation {
                name: "raw".into(),
                source: &x,
                target: &empty,
            }],
            &s,
            &t,
            &VariationOptions::default(),
        );
        assert!(matches!(res, Err(MetricError::MissingTarget)));
    }
}
