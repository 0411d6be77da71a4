//! Run settings: built-in defaults, overlaid by a TOML file and then by
//! `--set key=value` overrides. Keys that do not exist in the defaults are
//! rejected, except under `[sweep]` whose keys name model fields.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use super::CliError;
use crate::data::{Dataset, DEFAULT_VAL_FRACTION};
use crate::harness::{ProbeConfig, RobustnessPlan};
use crate::metrics::VariationOptions;
use crate::model::DisAEConfig;

/// Sections whose keys are free-form.
const FREE_SECTIONS: [&str; 1] = ["sweep"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSettings {
    pub folds: usize,
    pub repeats: usize,
    pub val_fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobustnessSettings {
    pub source_counts: Vec<usize>,
    pub max_per_cell: usize,
    pub variation: VariationOptions,
}

/// Fully resolved settings of one invocation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Settings {
    /// Dataset name or CSV path used when `--data` is absent.
    pub dataset: Option<String>,
    /// Sample count for generated datasets; `None` is the dataset default.
    pub scale: Option<usize>,
    pub seed: u64,
    /// Instances of the first domain used for training; `None` means the
    /// dataset default (instances 0 and 1 for A, B and C, else all rows).
    pub source_instances: Option<Vec<usize>>,
    pub model: DisAEConfig,
    pub experiment: ExperimentSettings,
    pub variation: VariationOptions,
    pub probe: ProbeConfig,
    pub robustness: RobustnessSettings,
    /// Hyperparameter grid: model key -> candidate values.
    pub sweep: BTreeMap<String, Vec<Value>>,
}

impl Settings {
    pub fn defaults(dataset: &Dataset, seed: u64) -> Self {
        let robust = RobustnessPlan::new(dataset);
        Self {
            dataset: None,
            scale: None,
            seed,
            source_instances: None,
            model: DisAEConfig {
                seed,
                ..DisAEConfig::for_dataset(dataset)
            },
            experiment: ExperimentSettings {
                folds: 5,
                repeats: 1,
                val_fraction: DEFAULT_VAL_FRACTION,
            },
            variation: VariationOptions::default(),
            probe: ProbeConfig::default(),
            robustness: RobustnessSettings {
                source_counts: robust.source_counts,
                max_per_cell: robust.max_per_cell,
                variation: robust.variation,
            },
            sweep: BTreeMap::new(),
        }
    }
}

/// User-supplied settings before they are laid over the defaults.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    doc: Map<String, Value>,
}

impl Overrides {
    /// Reads the optional TOML file, then applies `key=value` assignments.
    pub fn load(config: Option<&Path>, sets: &[String]) -> Result<Self, CliError> {
        let mut doc = match config {
            Some(path) => {
                let text = fs::read_to_string(path)
                    .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
                let table: toml::Table =
                    toml::from_str(&text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
                match to_json(table)? {
                    Value::Object(m) => m,
                    _ => unreachable!("a TOML table is an object"),
                }
            }
            None => Map::new(),
        };
        for s in sets {
            let (key, raw) = s
                .split_once('=')
                .ok_or_else(|| CliError::Usage(format!("override `{s}` is not of the form key=value")))?;
            insert_path(&mut doc, key.trim(), parse_value(raw.trim())?)?;
        }
        Ok(Self { doc })
    }

    fn top(&self, key: &str) -> Option<&Value> {
        self.doc.get(key).filter(|v| !v.is_null())
    }

    pub fn seed(&self) -> Result<Option<u64>, CliError> {
        self.top("seed")
            .map(|v| v.as_u64().ok_or_else(|| CliError::Usage(format!("seed must be a non-negative integer, got {v}"))))
            .transpose()
    }

    pub fn dataset(&self) -> Result<Option<String>, CliError> {
        self.top("dataset")
            .map(|v| v.as_str().map(String::from).ok_or_else(|| CliError::Usage("dataset must be a string".into())))
            .transpose()
    }

    pub fn scale(&self) -> Result<Option<usize>, CliError> {
        self.top("scale")
            .map(|v| {
                v.as_u64()
                    .map(|n| n as usize)
                    .ok_or_else(|| CliError::Usage(format!("scale must be a positive integer, got {v}")))
            })
            .transpose()
    }

    /// Lays the overrides over `defaults` and checks the result deserialises.
    pub fn resolve(&self, defaults: &Settings) -> Result<Settings, CliError> {
        let mut base = serde_json::to_value(defaults).map_err(|e| CliError::Runtime(e.to_string()))?;
        merge(&mut base, Value::Object(self.doc.clone()), "")?;
        serde_json::from_value(base).map_err(|e| CliError::Usage(format!("invalid configuration: {e}")))
    }
}

fn to_json(v: impl Serialize) -> Result<Value, CliError> {
    serde_json::to_value(v).map_err(|e| CliError::Usage(format!("unsupported config value: {e}")))
}

/// TOML syntax for the right-hand side, falling back to a bare string.
fn parse_value(raw: &str) -> Result<Value, CliError> {
    match toml::from_str::<toml::Table>(&format!("v = {raw}")) {
        Ok(mut t) => to_json(t.remove("v").expect("key present")),
        Err(_) => Ok(Value::String(raw.to_string())),
    }
}

fn insert_path(doc: &mut Map<String, Value>, key: &str, value: Value) -> Result<(), CliError> {
    let parts: Vec<&str> = key.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(CliError::Usage(format!("malformed override key `{key}`")));
    }
    let mut cur = doc;
    for p in &parts[..parts.len() - 1] {
        let slot = cur.entry(p.to_string()).or_insert_with(|| Value::Object(Map::new()));
        if !slot.is_object() {
            *slot = Value::Object(Map::new());
        }
        cur = slot.as_object_mut().expect("just made an object");
    }
    cur.insert(parts[parts.len() - 1].to_string(), value);
    Ok(())
}

fn join_key(path: &str, key: &str) -> String {
    if path.is_empty() {
        key.to_string()
    } else {
        format!("{path}.{key}")
    }
}

/// Recursive overlay. A tagged object (one with `kind`) whose tag changes is
/// replaced as a whole, since its other fields depend on the variant.
fn merge(base: &mut Value, user: Value, path: &str) -> Result<(), CliError> {
    if let (Value::Object(b), Value::Object(u)) = (&mut *base, &user) {
        let retagged = b.contains_key("kind") && u.get("kind").is_some_and(|k| Some(k) != b.get("kind"));
        if !retagged {
            let free = FREE_SECTIONS.contains(&path);
            for (k, v) in u {
                let key = join_key(path, k);
                match b.get_mut(k) {
                    Some(slot) => merge(slot, v.clone(), &key)?,
                    None if free => {
                        b.insert(k.clone(), v.clone());
                    }
                    None => return Err(CliError::Usage(format!("unknown config key `{key}`"))),
                }
            }
            return Ok(());
        }
    }
    *base = user;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{DomainColumn, DomainSpec, TaskSpec};
    use crate::metrics::Dissimilarity;
    use ndarray::Array2;

    fn toy() -> Dataset {
        Dataset::new(
            Array2::zeros((4, 3)),
            vec!["a".into(), "b".into(), "c".into()],
            vec![vec![0, 1, 0, 1]],
            vec![DomainColumn::Categorical(vec![0, 0, 1, 1])],
            vec![TaskSpec::new("t", 2)],
            vec![DomainSpec::categorical("d", 2)],
        )
        .unwrap()
    }

    fn sets(items: &[&str]) -> Vec<String> {
        items.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn overrides_reach_nested_fields() {
        let o = Overrides::load(None, &sets(&["model.lambda=2.5", "experiment.folds=3", "source_instances=[0, 2]"])).unwrap();
        let s = o.resolve(&Settings::defaults(&toy(), 0)).unwrap();
        assert_eq!(s.model.lambda, 2.5);
        assert_eq!(s.experiment.folds, 3);
        assert_eq!(s.source_instances, Some(vec![0, 2]));
    }

    #[test]
    fn unknown_keys_are_usage_errors() {
        let o = Overrides::load(None, &sets(&["model.lamda=2"])).unwrap();
        let err = o.resolve(&Settings::defaults(&toy(), 0)).unwrap_err();
        assert!(matches!(err, CliError::Usage(m) if m.contains("model.lamda")));
        assert!(Overrides::load(None, &sets(&["novalue"])).is_err());
    }

    #[test]
    fn wrong_types_are_usage_errors() {
        let o = Overrides::load(None, &sets(&["experiment.folds=many"])).unwrap();
        assert!(matches!(o.resolve(&Settings::defaults(&toy(), 0)), Err(CliError::Usage(_))));
    }

    #[test]
    fn retagging_replaces_the_variant() {
        let o = Overrides::load(None, &sets(&["variation.rho.kind=jsd"])).unwrap();
        let s = o.resolve(&Settings::defaults(&toy(), 0)).unwrap();
        assert_eq!(s.variation.rho, Dissimilarity::jsd());
    }

    #[test]
    fn toml_file_and_sweep_axes() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.toml");
        fs::write(&path, "seed = 9\n[model]\nmax_epochs = 4\n[sweep]\nlambda = [0.0, 1.0]\n").unwrap();
        let o = Overrides::load(Some(&path), &sets(&["model.max_epochs=6"])).unwrap();
        assert_eq!(o.seed().unwrap(), Some(9));
        let s = o.resolve(&Settings::defaults(&toy(), 9)).unwrap();
        assert_eq!(s.model.max_epochs, 6);
        assert_eq!(s.model.seed, 9);
        assert_eq!(s.sweep["lambda"].len(), 2);
    }
}
