//! Single-file model checkpoints: a 4-byte magic, a little-endian u32
//! format version, then a canonical JSON body. Canonical means struct field
//! order plus BTreeMap key order, so load-then-save is byte-identical.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{init_params, HyperParams, Vocabularies};
use crate::tensor::ParamSet;

pub const MAGIC: &[u8; 4] = b"ESPI";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("cannot access {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("bad magic: not a model checkpoint")]
    BadMagic,
    #[error("unsupported checkpoint version {found} (expected {expected})")]
    VersionMismatch { found: u32, expected: u32 },
    #[error("corrupt checkpoint body: {0}")]
    Corrupt(String),
    #[error("parameter {name} has shape {found:?}, expected {expected:?}")]
    ShapeMismatch {
        name: String,
        found: Vec<usize>,
        expected: Vec<usize>,
    },
    #[error("parameter {0} missing from checkpoint")]
    MissingParameter(String),
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainMeta {
    pub epoch: usize,
    pub best_val_accuracy: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelCheckpoint {
    pub hyperparams: HyperParams,
    pub vocabs: Vocabularies,
    pub params: ParamSet,
    pub meta: TrainMeta,
}

impl ModelCheckpoint {
    /// Every architecture tensor present with the shape the hyperparameters
    /// and vocabularies dictate.
    pub fn validate(&self) -> Result<(), CheckpointError> {
        let reference = init_params(&self.hyperparams, &self.vocabs, 0);
        for (name, expect) in &reference {
            let got = self
                .params
                .get(name)
                .ok_or_else(|| CheckpointError::MissingParameter(name.clone()))?;
            if got.shape != expect.shape {
                return Err(CheckpointError::ShapeMismatch {
                    name: name.clone(),
                    found: got.shape.clone(),
                    expected: expect.shape.clone(),
                });
            }
        }
        Ok(())
    }
}

pub fn save_checkpoint(ckpt: &ModelCheckpoint, path: &Path) -> Result<(), CheckpointError> {
    let mut bytes = Vec::new();
    bytes.extend_from_slice(MAGIC);
    bytes.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    let body = serde_json::to_vec(ckpt).map_err(|e| CheckpointError::Corrupt(e.to_string()))?;
    bytes.extend_from_slice(&body);
    fs::write(path, bytes).map_err(|source| CheckpointError::Io {
        path: path.display().to_string(),
        source,
    })
}

pub fn load_checkpoint(path: &Path) -> Result<ModelCheckpoint, CheckpointError> {
    let bytes = fs::read(path).map_err(|source| CheckpointError::Io {
        path: path.display().to_string(),
        source,
    })?;
    if bytes.len() < 8 || &bytes[..4] != MAGIC {
        return Err(CheckpointError::BadMagic);
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
    if version != FORMAT_VERSION {
        return Err(CheckpointError::VersionMismatch { found: version, expected: FORMAT_VERSION });
    }
    let mut ckpt: ModelCheckpoint = serde_json::from_slice(&bytes[8..])
        .map_err(|e| CheckpointError::Corrupt(e.to_string()))?;
    for t in ckpt.params.values_mut() {
        t.requires_grad = true;
        t.grad = None;
    }
    ckpt.validate()?;
    Ok(ckpt)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{build_vocabularies, predict_features, CommitFeatures};
    use crate::msg::graph_for_message;
    use crate::ast::PathSet;

    fn toy_checkpoint() -> (ModelCheckpoint, CommitFeatures) {
        let hp = HyperParams { d_model: 4, hidden: 3, ..HyperParams::small(1) };
        let features = CommitFeatures {
            paths: PathSet { paths: Vec::new(), k_requested: 10, ratio_r: 1.0 },
            graph: graph_for_message("fix double free in parser"),
        };
        let vocabs = build_vocabularies([&features]);
        let params = init_params(&hp, &vocabs, 1);
        (
            ModelCheckpoint {
                hyperparams: hp,
                vocabs,
                params,
                meta: TrainMeta { epoch: 3, best_val_accuracy: 0.75, seed: 1 },
            },
            features,
        )
    }

    #[test]
    fn round_trip_preserves_prediction_exactly() {
        let (ckpt, features) = toy_checkpoint();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ckpt");
        save_checkpoint(&ckpt, &path).unwrap();
        let loaded = load_checkpoint(&path).unwrap();
        let before =
            predict_features(&ckpt.params, &features, &ckpt.vocabs, &ckpt.hyperparams).unwrap();
        let after = predict_features(
            &loaded.params,
            &features,
            &loaded.vocabs,
            &loaded.hyperparams,
        )
        .unwrap();
        assert_eq!(before.prob.to_bits(), after.prob.to_bits());
        assert_eq!(loaded.meta, ckpt.meta);
    }

    #[test]
    fn load_then_resave_is_byte_identical() {
        let (ckpt, _) = toy_checkpoint();
        let dir = tempfile::tempdir().unwrap();
        let a = dir.path().join("a.ckpt");
        let b = dir.path().join("b.ckpt");
        save_checkpoint(&ckpt, &a).unwrap();
        let loaded = load_checkpoint(&a).unwrap();
        save_checkpoint(&loaded, &b).unwrap();
        assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    }

    #[test]
    fn wrong_magic_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("junk.ckpt");
        std::fs::write(&path, b"NOPE0000{}").unwrap();
        assert!(matches!(load_checkpoint(&path), Err(CheckpointError::BadMagic)));
    }

    #[test]
    fn truncated_file_is_rejected_without_panic() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("trunc.ckpt");
        std::fs::write(&path, b"ES").unwrap();
        assert!(matches!(load_checkpoint(&path), Err(CheckpointError::BadMagic)));
    }

    #[test]
    fn future_version_is_rejected() {
        let (ckpt, _) = toy_checkpoint();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("v9.ckpt");
        save_checkpoint(&ckpt, &path).unwrap();
        let mut bytes = std::fs::read(&path).unwrap();
        bytes[4..8].copy_from_slice(&9u32.to_le_bytes());
        std::fs::write(&path, bytes).unwrap();
        assert!(matches!(
            load_checkpoint(&path),
            Err(CheckpointError::VersionMismatch { found: 9, .. })
        ));
    }

    #[test]
    fn shape_drift_is_rejected() {
        let (mut ckpt, _) = toy_checkpoint();
        let t = ckpt.params.get_mut("ens_fc_b").unwrap();
        *t = crate::tensor::Tensor::param(vec![2], vec![0.0, 0.0]);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.ckpt");
        save_checkpoint(&ckpt, &path).unwrap();
        assert!(matches!(
            load_checkpoint(&path),
            Err(CheckpointError::ShapeMismatch { .. })
        ));
    }

    #[test]
    fn corrupt_body_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("corrupt.ckpt");
        let mut bytes = Vec::new();
        bytes.extend_from_slice(MAGIC);
        bytes.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        bytes.extend_from_slice(b"{not json");
        std::fs::write(&path, bytes).unwrap();
        assert!(matches!(load_checkpoint(&path), Err(CheckpointError::Corrupt(_))));
    }
}
