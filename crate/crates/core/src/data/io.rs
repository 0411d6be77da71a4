//! CSV + sidecar metadata persistence.
//!
//! The CSV has a header row: feature columns first, then `task:<name>`
//! columns, then `domain:<name>` columns. The sidecar (`<stem>.meta.json`)
//! declares the specs, optional normalization stats, optional generator
//! provenance, and the format version.

use std::fs;
use std::path::{Path, PathBuf};

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::{DataError, Dataset, DomainColumn, DomainKind, DomainSpec, NormStats, TaskSpec};

pub const FORMAT_VERSION: &str = "1";

/// Column-role mapping and provenance stored next to a dataset CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub format_version: String,
    pub feature_names: Vec<String>,
    pub tasks: Vec<TaskSpec>,
    pub domains: Vec<DomainSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub normalization: Option<NormStats>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generator: Option<serde_json::Value>,
}

impl DatasetMeta {
    pub fn describe(dataset: &Dataset) -> Self {
        Self {
            format_version: FORMAT_VERSION.into(),
            feature_names: dataset.feature_names().to_vec(),
            tasks: dataset.task_specs().to_vec(),
            domains: dataset.domain_specs().to_vec(),
            normalization: None,
            generator: None,
        }
    }

    pub fn read(path: &Path) -> Result<Self, DataError> {
        let text = fs::read_to_string(path).map_err(|e| DataError::io(path, e))?;
        let meta: DatasetMeta = serde_json::from_str(&text).map_err(|e| DataError::Meta(e.to_string()))?;
        if meta.format_version != FORMAT_VERSION {
            return Err(DataError::Meta(format!(
                "unsupported dataset format version `{}` (expected `{FORMAT_VERSION}`)",
                meta.format_version
            )));
        }
        Ok(meta)
    }

    pub fn write(&self, path: &Path) -> Result<(), DataError> {
        let text = serde_json::to_string_pretty(self).map_err(|e| DataError::Meta(e.to_string()))?;
        fs::write(path, text + "\n").map_err(|e| DataError::io(path, e))
    }
}

/// `data/a.csv` -> `data/a.meta.json`.
pub fn meta_path(csv_path: &Path) -> PathBuf {
    csv_path.with_extension("meta.json")
}

/// Loads a dataset, reading the schema from the sidecar file.
pub fn load_dataset(path: &Path) -> Result<(Dataset, DatasetMeta), DataError> {
    let meta = DatasetMeta::read(&meta_path(path))?;
    let ds = load_dataset_with_schema(path, &meta)?;
    Ok((ds, meta))
}

/// Loads a dataset CSV using an explicit schema.
pub fn load_dataset_with_schema(path: &Path, schema: &DatasetMeta) -> Result<Dataset, DataError> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| DataError::Csv(e.to_string()))?;
    let headers = reader.headers().map_err(|e| DataError::Csv(e.to_string()))?.clone();
    let find = |name: &str| -> Result<usize, DataError> {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| DataError::MissingColumn(name.to_string()))
    };
    let feat_cols: Vec<usize> = schema.feature_names.iter().map(|n| find(n)).collect::<Result<_, _>>()?;
    let task_cols: Vec<usize> = schema
        .tasks
        .iter()
        .map(|t| find(&format!("task:{}", t.name)))
        .collect::<Result<_, _>>()?;
    let dom_cols: Vec<usize> = schema
        .domains
        .iter()
        .map(|d| find(&format!("domain:{}", d.name)))
        .collect::<Result<_, _>>()?;

    let k = feat_cols.len();
    let mut feats = Vec::new();
    let mut tasks: Vec<Vec<usize>> = vec![Vec::new(); task_cols.len()];
    let mut doms: Vec<DomainColumn> = schema
        .domains
        .iter()
        .map(|d| match d.kind {
            DomainKind::Categorical { .. } => DomainColumn::Categorical(Vec::new()),
            DomainKind::Continuous { .. } => DomainColumn::Continuous(Vec::new()),
        })
        .collect();
    let mut bad_rows = Vec::new();

    for (row, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| DataError::Csv(e.to_string()))?;
        let cell = |col: usize| rec.get(col).unwrap_or("").trim();
        let mut finite = true;
        for &c in &feat_cols {
            let v: f64 = cell(c).parse().map_err(|_| DataError::Parse {
                row,
                column: headers[c].to_string(),
                value: cell(c).to_string(),
            })?;
            finite &= v.is_finite();
            feats.push(v);
        }
        if !finite {
            bad_rows.push(row);
        }
        for (t, &c) in task_cols.iter().enumerate() {
            let v = parse_label(cell(c), row, &headers[c])?;
            if v < 0 || v as usize >= schema.tasks[t].n_classes {
                return Err(DataError::LabelOutOfRange {
                    column: headers[c].to_string(),
                    row,
                    value: v,
                    limit: schema.tasks[t].n_classes,
                });
            }
            tasks[t].push(v as usize);
        }
        for (d, &c) in dom_cols.iter().enumerate() {
            match &mut doms[d] {
                DomainColumn::Categorical(col) => {
                    let v = parse_label(cell(c), row, &headers[c])?;
                    let limit = schema.domains[d].n_classes();
                    if v < 0 || v as usize >= limit {
                        return Err(DataError::LabelOutOfRange {
                            column: headers[c].to_string(),
                            row,
                            value: v,
                            limit,
                        });
                    }
                    col.push(v as usize);
                }
                DomainColumn::Continuous(col) => {
                    let v: f64 = cell(c).parse().map_err(|_| DataError::Parse {
                        row,
                        column: headers[c].to_string(),
                        value: cell(c).to_string(),
                    })?;
                    col.push(v);
                }
            }
        }
    }
    if let Some(&first) = bad_rows.first() {
        return Err(DataError::NonFinite {
            first_row: first,
            count: bad_rows.len(),
        });
    }
    let n = feats.len() / k.max(1);
    let features = Array2::from_shape_vec((n, k), feats).map_err(|e| DataError::Csv(e.to_string()))?;
    Dataset::new(
        features,
        schema.feature_names.clone(),
        tasks,
        doms,
        schema.tasks.clone(),
        schema.domains.clone(),
    )
}

fn parse_label(s: &str, row: usize, column: &str) -> Result<i64, DataError> {
    s.parse().map_err(|_| DataError::Parse {
        row,
        column: column.to_string(),
        value: s.to_string(),
    })
}

/// Writes the CSV and its sidecar. Floats use the shortest representation
/// that parses back to the identical value.
pub fn save_dataset(dataset: &Dataset, meta: &DatasetMeta, path: &Path) -> Result<(), DataError> {
    if let Some(dir) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| DataError::io(dir, e))?;
    }
    let mut w = csv::Writer::from_path(path).map_err(|e| DataError::Csv(e.to_string()))?;
    let mut header: Vec<String> = dataset.feature_names().to_vec();
    header.extend(dataset.task_specs().iter().map(|t| format!("task:{}", t.name)));
    header.extend(dataset.domain_specs().iter().map(|d| format!("domain:{}", d.name)));
    w.write_record(&header).map_err(|e| DataError::Csv(e.to_string()))?;
    let mut record: Vec<String> = Vec::with_capacity(header.len());
    for i in 0..dataset.n_samples() {
        record.clear();
        record.extend(dataset.features().row(i).iter().map(|v| v.to_string()));
        record.extend(dataset.task_labels().iter().map(|c| c[i].to_string()));
        record.extend(dataset.domain_labels().iter().map(|c| match c {
            DomainColumn::Categorical(v) => v[i].to_string(),
            DomainColumn::Continuous(v) => v[i].to_string(),
        }));
        w.write_record(&record).map_err(|e| DataError::Csv(e.to_string()))?;
    }
    w.flush().map_err(|e| DataError::io(path, e))?;
    meta.write(&meta_path(path))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn schema() -> DatasetMeta {
        DatasetMeta {
            format_version: FORMAT_VERSION.into(),
            feature_names: vec!["x0".into(), "x1".into()],
            tasks: vec![TaskSpec::new("y", 2)],
            domains: vec![DomainSpec::categorical("site", 2)],
            normalization: None,
            generator: None,
        }
    }

    fn write_csv(dir: &Path, body: &str) -> PathBuf {
        let p = dir.join("d.csv");
        fs::write(&p, body).unwrap();
        p
    }

    #[test]
    fn four_row_csv() {
        let dir = tempfile::tempdir().unwrap();
        let p = write_csv(
            dir.path(),
            "x0,x1,task:y,domain:site\n0.5,1,0,0\n1.5,2,1,1\n-1,3,0,1\n2,4e-1,1,0\n",
        );
        let d = load_dataset_with_schema(&p, &schema()).unwrap();
        assert_eq!((d.n_samples(), d.n_features(), d.n_tasks(), d.n_domains()), (4, 2, 1, 1));
        assert_eq!(d.features()[[3, 1]], 0.4);
    }

    #[test]
    fn nan_cell_names_the_row() {
        let dir = tempfile::tempdir().unwrap();
        let p = write_csv(dir.path(), "x0,x1,task:y,domain:site\n0.5,1,0,0\nNaN,2,1,1\n");
        let err = load_dataset_with_schema(&p, &schema()).unwrap_err();
        assert!(matches!(err, DataError::NonFinite { first_row: 1, count: 1 }));
        assert!(err.to_string().contains("row 1"));
    }

    #[test]
    fn label_out_of_range() {
        let dir = tempfile::tempdir().unwrap();
        let p = write_csv(dir.path(), "x0,x1,task:y,domain:site\n0.5,1,3,0\n");
        let err = load_dataset_with_schema(&p, &schema()).unwrap_err();
        assert!(matches!(err, DataError::LabelOutOfRange { row: 0, value: 3, .. }));
    }

    #[test]
    fn missing_column() {
        let dir = tempfile::tempdir().unwrap();
        let p = write_csv(dir.path(), "x0,task:y,domain:site\n0.5,1,0\n");
        let err = load_dataset_with_schema(&p, &schema()).unwrap_err();
        assert!(matches!(err, DataError::MissingColumn(ref c) if c == "x1"));
    }

    #[test]
    fn save_load_round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let d = Dataset::new(
            ndarray::array![[0.1 + 0.2, -1e-300], [std::f64::consts::PI, 7.0]],
            vec!["x0".into(), "x1".into()],
            vec![vec![1, 0]],
            vec![DomainColumn::Continuous(vec![0.3, 1.0 / 3.0])],
            vec![TaskSpec::new("y", 2)],
            vec![DomainSpec::continuous("age")],
        )
        .unwrap();
        let p = dir.path().join("sub/d.csv");
        save_dataset(&d, &DatasetMeta::describe(&d), &p).unwrap();
        let (back, meta) = load_dataset(&p).unwrap();
        assert_eq!(back, d);
        assert_eq!(meta.format_version, "1");
    }

    #[test]
    fn wrong_version_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let mut m = schema();
        m.format_version = "0".into();
        let p = dir.path().join("m.meta.json");
        m.write(&p).unwrap();
        assert!(DatasetMeta::read(&p).is_err());
    }
}
