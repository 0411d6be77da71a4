use std::fmt;
use std::str::FromStr;

use ndarray::Axis;
use rand::seq::index;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::{
    apply_shift_plan, make_classification, make_multilabel, AffineInstance, GeneratorConfig, Response, ShiftDomain,
    ShiftPlan, SynthError, TaskGenSpec,
};
use crate::data::{Dataset, DatasetMeta};
use crate::rng::{derive_seed, seeded, Rng};

/// Default size of the Many Affines corpus; the full size is [`MANY_AFFINES_FULL`].
pub const MANY_AFFINES_DESK: usize = 50_000;
pub const MANY_AFFINES_FULL: usize = 500_000;
pub const MANY_AFFINES_INSTANCES: usize = 70;

const N_FEATURES: usize = 48;
const N_INFORMATIVE: usize = 4;
const N_REDUNDANT: usize = 44;
/// Redundant feature shifted together with an informative one by the fifth instance.
const SECONDARY_REDUNDANT: usize = 6;
/// Scale change per unit of shift magnitude.
const SCALE_STEP: f64 = 0.1;
/// Offset per unit of shift magnitude, in units of the mean feature std.
const OFFSET_STEP: f64 = 2.0;
/// Base shift magnitudes of instances 0-3: the two majority instances sit
/// close together, the targets progressively further away.
const BASE_MAGNITUDE: [f64; 4] = [0.0, 1.0, 3.0, 5.0];
/// Base magnitude of the fifth instance, which shifts other features.
const OTHER_MAGNITUDE: f64 = 6.0;
/// Noise blurring the copies of the informative block held by the redundant
/// columns, so a shifted informative column is not exactly recoverable.
const REDUNDANT_NOISE: f64 = 1.5;
/// Dataset C keeps its multilabel signal mostly recoverable.
const C_REDUNDANT_NOISE: f64 = 0.5;
/// Width of the uniform jitter added to each base magnitude.
const JITTER: f64 = 0.25;
/// Largest shift magnitude among the Many Affines instances.
const MANY_AFFINES_REACH: f64 = 4.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum StandardDataset {
    A,
    B,
    C,
    ManyAffines,
}

impl StandardDataset {
    pub const ALL: [StandardDataset; 4] = [Self::A, Self::B, Self::C, Self::ManyAffines];

    pub fn default_samples(self) -> usize {
        match self {
            Self::A | Self::B => 13_000,
            Self::C => 26_000,
            Self::ManyAffines => MANY_AFFINES_DESK,
        }
    }
}

impl fmt::Display for StandardDataset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::A => "A",
            Self::B => "B",
            Self::C => "C",
            Self::ManyAffines => "many-affines",
        })
    }
}

impl FromStr for StandardDataset {
    type Err = SynthError;

    fn from_str(s: &str) -> Result<Self, SynthError> {
        match s.to_ascii_lowercase().replace('_', "-").as_str() {
            "a" => Ok(Self::A),
            "b" => Ok(Self::B),
            "c" => Ok(Self::C),
            "many-affines" | "manyaffines" => Ok(Self::ManyAffines),
            _ => Err(SynthError::UnknownDataset(s.to_string())),
        }
    }
}

/// Everything needed to regenerate a dataset; stored in the metadata sidecar.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub name: StandardDataset,
    pub seed: u64,
    pub config: GeneratorConfig,
    pub plan: ShiftPlan,
}

impl Provenance {
    /// Instance ranks of the first categorical domain, indexed by instance id.
    pub fn instance_ranks(&self) -> Option<Vec<usize>> {
        self.plan.domains.iter().find_map(|d| match d {
            ShiftDomain::Categorical { instances, .. } => Some(instances.iter().map(|i| i.rank).collect()),
            _ => None,
        })
    }

    pub fn from_meta(meta: &DatasetMeta) -> Option<Self> {
        meta.generator.as_ref().and_then(|g| serde_json::from_value(g.clone()).ok())
    }
}

#[derive(Debug, Clone)]
pub struct Generated {
    pub dataset: Dataset,
    pub provenance: Provenance,
}

impl Generated {
    pub fn meta(&self) -> DatasetMeta {
        let mut meta = DatasetMeta::describe(&self.dataset);
        meta.generator = Some(serde_json::to_value(&self.provenance).expect("provenance serialises"));
        meta
    }
}

fn base_config(name: StandardDataset, n_samples: usize, seed: u64) -> GeneratorConfig {
    let tasks = match name {
        StandardDataset::C => vec![
            TaskGenSpec {
                name: "task1".into(),
                ratios: vec![2.0, 5.0],
            },
            TaskGenSpec::balanced("task2", 2),
            TaskGenSpec {
                name: "task3".into(),
                ratios: vec![2.0, 5.0],
            },
        ],
        _ => vec![TaskGenSpec::balanced("task", 2)],
    };
    GeneratorConfig {
        n_samples,
        n_features: N_FEATURES,
        n_informative: N_INFORMATIVE,
        n_redundant: N_REDUNDANT,
        class_sep: if name == StandardDataset::C { 2.0 } else { 1.5 },
        tasks,
        flip_y: 0.0,
        redundant_noise: if name == StandardDataset::C { C_REDUNDANT_NOISE } else { REDUNDANT_NOISE },
        seed: derive_seed(seed, &[0]),
    }
}

/// Mean per-feature standard deviation over the informative and redundant block.
fn signal_scale(ds: &Dataset) -> f64 {
    let x = ds.features();
    let cols = N_INFORMATIVE + N_REDUNDANT;
    x.axis_iter(Axis(1))
        .take(cols)
        .map(|c| c.std(0.0))
        .sum::<f64>()
        / cols as f64
}

fn affine(id: usize, features: &[usize], magnitude: f64, signs: &[f64], unit: f64) -> AffineInstance {
    AffineInstance {
        id,
        features: features.to_vec(),
        scale: vec![1.0 + SCALE_STEP * magnitude; features.len()],
        offset: signs.iter().map(|s| s * OFFSET_STEP * magnitude * unit).collect(),
        rank: id + 1,
    }
}

/// Informative features ordered by how strongly the first task separates
/// them (absolute difference of class means, largest first).
fn discriminative_order(ds: &Dataset) -> Vec<usize> {
    let y = &ds.task_labels()[0];
    let x = ds.features();
    let gap: Vec<f64> = (0..N_INFORMATIVE)
        .map(|j| {
            let (mut s, mut n) = ([0.0; 2], [0usize; 2]);
            for (i, &c) in y.iter().enumerate() {
                let k = usize::from(c > 0);
                s[k] += x[[i, j]];
                n[k] += 1;
            }
            (s[1] / n[1].max(1) as f64 - s[0] / n[0].max(1) as f64).abs()
        })
        .collect();
    let mut order: Vec<usize> = (0..N_INFORMATIVE).collect();
    order.sort_by(|&a, &b| gap[b].total_cmp(&gap[a]).then(a.cmp(&b)));
    order
}

/// Five instances in ratio 5:5:1:1:1. Instances 0-3 shift the most
/// class-discriminative feature with magnitude `i + u`; instance 4 shifts
/// the second most discriminative feature plus a redundant one, with the
/// largest magnitude.
fn five_instances(base: &Dataset, unit: f64, rng: &mut Rng) -> ShiftDomain {
    let order = discriminative_order(base);
    let signs: Vec<f64> = (0..2).map(|_| if rng.random::<bool>() { 1.0 } else { -1.0 }).collect();
    let mut instances: Vec<AffineInstance> = (0..4)
        .map(|i| affine(i, &[order[0]], BASE_MAGNITUDE[i] + JITTER * rng.random::<f64>(), &signs[..1], unit))
        .collect();
    instances.push(affine(
        4,
        &[order[1], SECONDARY_REDUNDANT],
        OTHER_MAGNITUDE + JITTER * rng.random::<f64>(),
        &signs,
        unit,
    ));
    ShiftDomain::Categorical {
        name: "instance".into(),
        ratios: vec![5.0, 5.0, 1.0, 1.0, 1.0],
        instances,
    }
}

/// Two correlated covariates; `first` is the plan index of the first one.
fn continuous_domains(unit: f64, first: usize) -> [ShiftDomain; 2] {
    [
        ShiftDomain::Continuous {
            name: "age".into(),
            correlated_with: None,
            responses: vec![
                Response::Linear {
                    feature: 7,
                    coef: 0.5 * unit,
                },
                Response::Warp { feature: 8, coef: 0.3 },
            ],
            n_bins: 5,
        },
        ShiftDomain::Continuous {
            name: "season".into(),
            correlated_with: Some((first, 0.5)),
            responses: vec![Response::Sine {
                feature: 9,
                coef: 0.5 * unit,
                freq: 1.5,
            }],
            n_bins: 5,
        },
    ]
}

/// Instances with evenly spread magnitudes, each shifting a random pair of
/// redundant features. Ids follow distance rank.
fn many_instances(unit: f64, rng: &mut Rng) -> ShiftDomain {
    let k = MANY_AFFINES_INSTANCES;
    let instances = (0..k)
        .map(|i| {
            let picked = index::sample(rng, N_REDUNDANT, 2).into_vec();
            let mut feats: Vec<usize> = picked.iter().map(|j| N_INFORMATIVE + j).collect();
            feats.sort_unstable();
            let signs: Vec<f64> = (0..2).map(|_| if rng.random::<bool>() { 1.0 } else { -1.0 }).collect();
            let magnitude = MANY_AFFINES_REACH * (i as f64 + rng.random::<f64>()) / k as f64;
            affine(i, &feats, magnitude, &signs, unit)
        })
        .collect();
    ShiftDomain::Categorical {
        name: "instance".into(),
        ratios: vec![1.0; k],
        instances,
    }
}

/// Builds dataset A, B, C or Many Affines. `scale` overrides the sample count.
pub fn generate_standard(name: StandardDataset, seed: u64, scale: Option<usize>) -> Result<Generated, SynthError> {
    let n = scale.unwrap_or_else(|| name.default_samples());
    let config = base_config(name, n, seed);
    let base = match name {
        StandardDataset::C => make_multilabel(&config)?,
        _ => make_classification(&config)?,
    };
    let unit = signal_scale(&base);
    let mut rng = seeded(derive_seed(seed, &[1]));
    let mut plan = ShiftPlan::default();
    match name {
        StandardDataset::A => plan.domains.push(five_instances(&base, unit, &mut rng)),
        StandardDataset::B | StandardDataset::C => {
            plan.domains.push(five_instances(&base, unit, &mut rng));
            plan.domains.extend(continuous_domains(unit, 1));
        }
        StandardDataset::ManyAffines => plan.domains.push(many_instances(unit, &mut rng)),
    }
    let dataset = apply_shift_plan(&base, &plan, derive_seed(seed, &[2]))?;
    Ok(Generated {
        dataset,
        provenance: Provenance {
            name,
            seed,
            config,
            plan,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ranks_consistent(g: &Generated) {
        let ShiftDomain::Categorical { instances, .. } = &g.provenance.plan.domains[0] else {
            panic!("first domain is categorical")
        };
        for w in instances.windows(2) {
            assert!(w[1].rank > w[0].rank);
            assert!(w[1].distance() > w[0].distance());
        }
    }

    #[test]
    fn dataset_shapes() {
        let a = generate_standard(StandardDataset::A, 7, None).unwrap();
        assert_eq!(a.dataset.n_samples(), 13000);
        assert_eq!((a.dataset.n_tasks(), a.dataset.n_domains()), (1, 1));
        ranks_consistent(&a);
        let b = generate_standard(StandardDataset::B, 7, Some(2000)).unwrap();
        assert_eq!(b.dataset.n_domains(), 3);
        let c = generate_standard(StandardDataset::C, 7, None).unwrap();
        assert_eq!((c.dataset.n_samples(), c.dataset.n_tasks(), c.dataset.n_domains()), (26000, 3, 3));
        for (t, want) in [(0, 5.0 / 7.0), (1, 0.5), (2, 5.0 / 7.0)] {
            let frac = c.dataset.class_counts(t)[1] as f64 / 26000.0;
            assert!((frac - want).abs() < 0.02);
        }
        let m = generate_standard(StandardDataset::ManyAffines, 7, Some(7000)).unwrap();
        assert_eq!(m.dataset.domain_specs()[0].n_classes(), 70);
        ranks_consistent(&m);
    }

    #[test]
    fn names_parse() {
        assert_eq!("many-affines".parse::<StandardDataset>().unwrap(), StandardDataset::ManyAffines);
        assert_eq!("a".parse::<StandardDataset>().unwrap(), StandardDataset::A);
        assert!(matches!("D".parse::<StandardDataset>(), Err(SynthError::UnknownDataset(_))));
    }

    #[test]
    fn provenance_round_trips_through_meta() {
        let g = generate_standard(StandardDataset::B, 3, Some(500)).unwrap();
        let back = Provenance::from_meta(&g.meta()).unwrap();
        assert_eq!(back, g.provenance);
        assert_eq!(back.instance_ranks().unwrap(), vec![1, 2, 3, 4, 5]);
    }
}
