//! Binary checkpoint format.
//!
//! ```text
//! magic    8 bytes   b"DISAECKP"
//! version  u32 LE
//! length   u64 LE    payload length in bytes
//! digest   32 bytes  SHA-256 of the payload
//! payload  u64 LE header length, JSON header, then every tensor listed in
//!          the header as raw little-endian f64 values
//! ```
//!
//! Parameters, normalization statistics and bin edges are stored as raw
//! bits, so a save/load round trip is exact.

use std::fs;
use std::path::Path;

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{DisAEConfig, DisAEModel, ModelError, TrainHistory};
use crate::data::{BinEdges, NormStats};

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"DISAECKP";
pub const CHECKPOINT_VERSION: u32 = 1;
const PREAMBLE: usize = 8 + 4 + 8 + 32;

/// A trained model with its training history and free-form provenance.
#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub model: DisAEModel,
    pub history: TrainHistory,
    pub metadata: serde_json::Value,
}

#[derive(Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    rows: usize,
    cols: usize,
}

#[derive(Serialize, Deserialize)]
struct Header {
    config: DisAEConfig,
    history: TrainHistory,
    metadata: serde_json::Value,
    tensors: Vec<TensorEntry>,
}

fn stored_tensors(model: &DisAEModel) -> Vec<(String, usize, usize, Vec<f64>)> {
    let mut t = model.named_tensors();
    if let Some(norm) = &model.norm {
        t.push(("norm.means".into(), 1, norm.dim(), norm.means.clone()));
        t.push(("norm.stds".into(), 1, norm.dim(), norm.stds.clone()));
    }
    for (d, edges) in model.domain_bins.iter().enumerate() {
        if let Some(e) = edges {
            t.push((format!("domain_bins.{d}"), 1, e.edges.len(), e.edges.clone()));
        }
    }
    t
}

fn encode(ckpt: &Checkpoint) -> Result<Vec<u8>, ModelError> {
    let tensors = stored_tensors(&ckpt.model);
    let header = Header {
        config: ckpt.model.config.clone(),
        history: ckpt.history.clone(),
        metadata: ckpt.metadata.clone(),
        tensors: tensors
            .iter()
            .map(|(name, rows, cols, _)| TensorEntry {
                name: name.clone(),
                rows: *rows,
                cols: *cols,
            })
            .collect(),
    };
    let json = serde_json::to_vec(&header).map_err(|e| ModelError::Corrupt(e.to_string()))?;
    let mut payload = Vec::with_capacity(8 + json.len() + 8 * ckpt.model.n_params());
    payload.extend_from_slice(&(json.len() as u64).to_le_bytes());
    payload.extend_from_slice(&json);
    for (_, _, _, values) in &tensors {
        for v in values {
            payload.extend_from_slice(&v.to_le_bytes());
        }
    }
    let mut out = Vec::with_capacity(PREAMBLE + payload.len());
    out.extend_from_slice(CHECKPOINT_MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    out.extend_from_slice(&(payload.len() as u64).to_le_bytes());
    out.extend_from_slice(&Sha256::digest(&payload));
    out.extend_from_slice(&payload);
    Ok(out)
}

fn decode(bytes: &[u8]) -> Result<Checkpoint, ModelError> {
    if bytes.len() < 12 || &bytes[..8] != CHECKPOINT_MAGIC {
        return Err(ModelError::Corrupt("not a checkpoint file".into()));
    }
    let version = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
    if version != CHECKPOINT_VERSION {
        return Err(ModelError::UnsupportedVersion {
            found: version,
            expected: CHECKPOINT_VERSION,
        });
    }
    if bytes.len() < PREAMBLE {
        return Err(ModelError::Corrupt("truncated header".into()));
    }
    let length = u64::from_le_bytes(bytes[12..20].try_into().unwrap()) as usize;
    let digest = &bytes[20..52];
    let payload = &bytes[PREAMBLE..];
    if payload.len() != length {
        return Err(ModelError::Corrupt(format!(
            "checksum mismatch: payload is {} bytes, header declares {length}",
            payload.len()
        )));
    }
    if Sha256::digest(payload).as_slice() != digest {
        return Err(ModelError::Corrupt("checksum mismatch".into()));
    }

    let json_len = u64::from_le_bytes(
        payload
            .get(..8)
            .ok_or_else(|| ModelError::Corrupt("empty payload".into()))?
            .try_into()
            .unwrap(),
    ) as usize;
    let json = payload
        .get(8..8 + json_len)
        .ok_or_else(|| ModelError::Corrupt("header overruns payload".into()))?;
    let header: Header = serde_json::from_slice(json).map_err(|e| ModelError::Corrupt(e.to_string()))?;
    let mut raw = &payload[8 + json_len..];
    let mut take = |n: usize| -> Result<Vec<f64>, ModelError> {
        if raw.len() < 8 * n {
            return Err(ModelError::Corrupt("tensor data overruns payload".into()));
        }
        let (head, rest) = raw.split_at(8 * n);
        raw = rest;
        Ok(head.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect())
    };

    let mut model = DisAEModel::new(header.config)?;
    let expected = model.named_tensors();
    let mut norm_means = None;
    let mut norm_stds = None;
    let mut layer_idx = 0;
    for entry in &header.tensors {
        let values = take(entry.rows * entry.cols)?;
        if let Some(rest) = entry.name.strip_prefix("norm.") {
            match rest {
                "means" => norm_means = Some(values),
                "stds" => norm_stds = Some(values),
                _ => return Err(ModelError::Corrupt(format!("unknown tensor {}", entry.name))),
            }
            continue;
        }
        if let Some(d) = entry.name.strip_prefix("domain_bins.") {
            let d: usize = d.parse().map_err(|_| ModelError::Corrupt(format!("bad tensor {}", entry.name)))?;
            let slot = model
                .domain_bins
                .get_mut(d)
                .ok_or_else(|| ModelError::Corrupt(format!("no domain head {d}")))?;
            *slot = Some(BinEdges { edges: values });
            continue;
        }
        let (name, rows, cols, _) = expected
            .get(layer_idx)
            .ok_or_else(|| ModelError::Corrupt(format!("unexpected tensor {}", entry.name)))?;
        if *name != entry.name || *rows != entry.rows || *cols != entry.cols {
            return Err(ModelError::Corrupt(format!(
                "tensor {} ({}x{}) does not match architecture slot {name} ({rows}x{cols})",
                entry.name, entry.rows, entry.cols
            )));
        }
        layer_idx += 1;
        set_tensor(&mut model, name, *rows, *cols, values)?;
    }
    if layer_idx != expected.len() {
        return Err(ModelError::Corrupt(format!(
            "checkpoint holds {layer_idx} of {} parameter tensors",
            expected.len()
        )));
    }
    if let (Some(means), Some(stds)) = (norm_means, norm_stds) {
        model.norm = Some(NormStats { means, stds });
    }
    Ok(Checkpoint {
        model,
        history: header.history,
        metadata: header.metadata,
    })
}

fn set_tensor(model: &mut DisAEModel, name: &str, rows: usize, cols: usize, values: Vec<f64>) -> Result<(), ModelError> {
    let mut parts = name.split('.');
    let (group, layer, kind) = match (parts.next(), parts.next(), parts.next()) {
        (Some(g), Some(l), Some(k)) => (g, l.parse::<usize>().map_err(|_| ModelError::Corrupt(name.into()))?, k),
        _ => return Err(ModelError::Corrupt(format!("bad tensor name {name}"))),
    };
    let net = match group {
        "encoder" => &mut model.encoder,
        "decoder" => &mut model.decoder,
        g if g.starts_with("task_head") => &mut model.task_heads[g["task_head".len()..].parse::<usize>().unwrap()],
        g if g.starts_with("domain_head") => {
            &mut model.domain_heads[g["domain_head".len()..].parse::<usize>().unwrap()]
        }
        _ => return Err(ModelError::Corrupt(format!("bad tensor name {name}"))),
    };
    let dense = &mut net.layers_mut()[layer];
    match kind {
        "weight" => dense.weight = Array2::from_shape_vec((rows, cols), values).map_err(|e| ModelError::Corrupt(e.to_string()))?,
        "bias" => dense.bias = Array1::from_vec(values),
        _ => return Err(ModelError::Corrupt(format!("bad tensor name {name}"))),
    }
    Ok(())
}

pub fn save_checkpoint(ckpt: &Checkpoint, path: &Path) -> Result<(), ModelError> {
    fs::write(path, encode(ckpt)?)?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint, ModelError> {
    decode(&fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::PlateauConfig;
    use crate::model::EpochSelection;

    fn model() -> DisAEModel {
        let mut m = DisAEModel::new(DisAEConfig {
            input_dim: 5,
            encoder_hidden: vec![6, 4],
            latent_dim: 3,
            head_hidden: None,
            domain_head_hidden: None,
            task_classes: vec![2, 3],
            domain_classes: vec![4, 5],
            alpha: 1.0,
            beta: 0.5,
            lambda: 2.0,
            l2: 1e-4,
            lr: 1e-3,
            batch_size: 8,
            max_epochs: 1,
            seed: 99,
            balance_task: Some(1),
            plateau: PlateauConfig::default(),
            selection: EpochSelection::Proxy,
        })
        .unwrap();
        m.norm = Some(NormStats {
            means: vec![0.1, 0.2, 1.0 / 3.0, -4.0, 5e-300],
            stds: vec![1.0, 2.0, 3.0, 0.7, 1e-12],
        });
        m.domain_bins[1] = Some(BinEdges {
            edges: vec![-0.5, 0.1, 0.3, std::f64::consts::PI],
        });
        m
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let ckpt = Checkpoint {
            model: model(),
            history: TrainHistory::default(),
            metadata: serde_json::json!({"dataset": "toy"}),
        };
        let bytes = encode(&ckpt).unwrap();
        let back = decode(&bytes).unwrap();
        let a: Vec<u64> = ckpt.model.flat_params().iter().map(|v| v.to_bits()).collect();
        let b: Vec<u64> = back.model.flat_params().iter().map(|v| v.to_bits()).collect();
        assert_eq!(a, b);
        assert_eq!(back.model.config, ckpt.model.config);
        assert_eq!(back.model.norm, ckpt.model.norm);
        assert_eq!(back.model.domain_bins, ckpt.model.domain_bins);
        assert_eq!(back.metadata, ckpt.metadata);
    }

    #[test]
    fn truncation_and_version_are_detected() {
        let ckpt = Checkpoint {
            model: model(),
            history: TrainHistory::default(),
            metadata: serde_json::Value::Null,
        };
        let bytes = encode(&ckpt).unwrap();
        let cut = &bytes[..bytes.len() - 7];
        match decode(cut) {
            Err(ModelError::Corrupt(msg)) => assert!(msg.contains("checksum")),
            other => panic!("unexpected {:?}", other.map(|_| ())),
        }
        let mut flipped = bytes.clone();
        let last = flipped.len() - 1;
        flipped[last] ^= 1;
        assert!(matches!(decode(&flipped), Err(ModelError::Corrupt(_))));
        let mut v0 = bytes;
        v0[8..12].copy_from_slice(&0u32.to_le_bytes());
        assert!(matches!(
            decode(&v0),
            Err(ModelError::UnsupportedVersion { found: 0, expected: 1 })
        ));
    }
}
