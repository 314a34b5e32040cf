//! Checkpoint files: `<run>/model.ckpt` (versioned JSON map of tensors,
//! bound to the vocabulary by content hash) and `<run>/vocab.json`.
//! Optimizer state is not persisted; checkpoints restore inference exactly.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{SannConfig, SannModel};
use crate::nn::{ParamStore, Tensor};
use crate::subtree::Vocab;

pub const MODEL_FILE: &str = "model.ckpt";
pub const VOCAB_FILE: &str = "vocab.json";
const CKPT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("corrupt checkpoint: {0}")]
    Corrupt(String),
    #[error("checkpoint/vocabulary mismatch: {0}")]
    VersionMismatch(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Serialize, Deserialize)]
struct TensorFile {
    shape: Vec<usize>,
    values: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct CheckpointFile {
    version: u32,
    config: SannConfig,
    subtree_vocab_size: usize,
    node_vocab_size: usize,
    vocab_sha256: String,
    params: BTreeMap<String, TensorFile>,
}

/// Write `model.ckpt` and `vocab.json` into `dir`, creating it if needed.
pub fn save_checkpoint(model: &SannModel, vocab: &Vocab, dir: &Path) -> std::io::Result<()> {
    fs::create_dir_all(dir)?;
    let mut params = BTreeMap::new();
    for name in model.store.names() {
        let t = model.store.value(name);
        params.insert(
            name.to_string(),
            TensorFile {
                shape: t.shape().to_vec(),
                values: t.data().to_vec(),
            },
        );
    }
    let file = CheckpointFile {
        version: CKPT_VERSION,
        config: model.config.clone(),
        subtree_vocab_size: model.subtree_vocab_size,
        node_vocab_size: model.node_vocab_size,
        vocab_sha256: vocab.content_hash(),
        params,
    };
    fs::write(
        dir.join(MODEL_FILE),
        serde_json::to_string(&file).expect("checkpoint serialization cannot fail"),
    )?;
    fs::write(dir.join(VOCAB_FILE), vocab.to_json())
}

/// Load a checkpoint directory back into a model/vocabulary pair, checking
/// the version, the vocabulary hash, and every tensor shape.
pub fn load_checkpoint(dir: &Path) -> Result<(SannModel, Vocab), CheckpointError> {
    let vocab_text = fs::read_to_string(dir.join(VOCAB_FILE))?;
    let vocab = Vocab::from_json(&vocab_text)
        .map_err(|e| CheckpointError::Corrupt(format!("vocab.json: {e}")))?;
    let ckpt_text = fs::read_to_string(dir.join(MODEL_FILE))?;
    let file: CheckpointFile = serde_json::from_str(&ckpt_text)
        .map_err(|e| CheckpointError::Corrupt(format!("model.ckpt: {e}")))?;

    if file.version != CKPT_VERSION {
        return Err(CheckpointError::VersionMismatch(format!(
            "file version {} but this build reads {CKPT_VERSION}",
            file.version
        )));
    }
    if file.vocab_sha256 != vocab.content_hash() {
        return Err(CheckpointError::VersionMismatch(
            "vocab.json does not match the hash recorded in model.ckpt".to_string(),
        ));
    }
    if file.subtree_vocab_size != vocab.subtree_vocab_size()
        || file.node_vocab_size != vocab.node_vocab_size()
    {
        return Err(CheckpointError::VersionMismatch(format!(
            "vocabulary sizes {}/{} do not match checkpoint {}/{}",
            vocab.subtree_vocab_size(),
            vocab.node_vocab_size(),
            file.subtree_vocab_size,
            file.node_vocab_size
        )));
    }

    let d = file.config.embed_dim;
    let expected: BTreeMap<&str, Vec<usize>> = BTreeMap::from([
        ("embed.subtree", vec![file.subtree_vocab_size, d]),
        ("embed.node", vec![file.node_vocab_size, d]),
        ("td.w", vec![2 * d, d]),
        ("td.b", vec![d]),
        ("attn.av", vec![d]),
        ("clf.w", vec![d, 1]),
        ("clf.b", vec![1]),
    ]);
    let mut store = ParamStore::new();
    for (name, shape) in &expected {
        let tf = file
            .params
            .get(*name)
            .ok_or_else(|| CheckpointError::Corrupt(format!("missing parameter `{name}`")))?;
        if &tf.shape != shape {
            return Err(CheckpointError::VersionMismatch(format!(
                "parameter `{name}` has shape {:?}, expected {shape:?}",
                tf.shape
            )));
        }
        if tf.values.len() != shape.iter().product::<usize>() {
            return Err(CheckpointError::Corrupt(format!(
                "parameter `{name}` value count does not match its shape"
            )));
        }
        store.insert(name, Tensor::from_vec(&tf.shape, tf.values.clone()));
    }

    Ok((
        SannModel {
            store,
            config: file.config,
            subtree_vocab_size: file.subtree_vocab_size,
            node_vocab_size: file.node_vocab_size,
        },
        vocab,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ast::parse;
    use crate::model::AttentionKind;
    use crate::subtree::{build_vocab, encode_program};

    fn fixture() -> (SannModel, Vocab, Vec<crate::subtree::EncodedProgram>) {
        let srcs = [
            "int f(int a) { if (a < 0) { return -a; } return a; }",
            "int g(int b) { b = b + 1; return b; }",
        ];
        let asts: Vec<_> = srcs.iter().map(|s| parse(s).unwrap()).collect();
        let vocab = build_vocab(&asts, 1);
        let config = SannConfig {
            embed_dim: 8,
            seed: 3,
            attention: AttentionKind::Sigmoid,
            ..SannConfig::default()
        };
        let model = SannModel::init(vocab.subtree_vocab_size(), vocab.node_vocab_size(), &config);
        let programs = asts
            .iter()
            .map(|a| encode_program(a, &vocab, 1, 16, 16).unwrap())
            .collect();
        (model, vocab, programs)
    }

    #[test]
    fn roundtrip_preserves_forward_outputs_exactly() {
        let (model, vocab, programs) = fixture();
        let dir = tempfile::tempdir().unwrap();
        save_checkpoint(&model, &vocab, dir.path()).unwrap();
        let (loaded, _) = load_checkpoint(dir.path()).unwrap();
        for ep in &programs {
            let a = model.forward(ep).unwrap();
            let b = loaded.forward(ep).unwrap();
            assert_eq!(a.prob_correct.to_bits(), b.prob_correct.to_bits());
            assert_eq!(a.code_vector.data(), b.code_vector.data());
        }
    }

    #[test]
    fn truncated_checkpoint_is_corrupt() {
        let (model, vocab, _) = fixture();
        let dir = tempfile::tempdir().unwrap();
        save_checkpoint(&model, &vocab, dir.path()).unwrap();
        let path = dir.path().join(MODEL_FILE);
        let text = std::fs::read_to_string(&path).unwrap();
        std::fs::write(&path, &text[..text.len() / 2]).unwrap();
        assert!(matches!(
            load_checkpoint(dir.path()).unwrap_err(),
            CheckpointError::Corrupt(_)
        ));
    }

    #[test]
    fn swapped_vocabulary_is_a_version_mismatch() {
        let (model, vocab, _) = fixture();
        let dir = tempfile::tempdir().unwrap();
        save_checkpoint(&model, &vocab, dir.path()).unwrap();
        // regenerate the vocab from different data so the hash moves
        let other = build_vocab(
            &[parse("int z(int q) { return q * q * q; }").unwrap()],
            1,
        );
        std::fs::write(dir.path().join(VOCAB_FILE), other.to_json()).unwrap();
        assert!(matches!(
            load_checkpoint(dir.path()).unwrap_err(),
            CheckpointError::VersionMismatch(_)
        ));
    }

    #[test]
    fn future_version_is_rejected() {
        let (model, vocab, _) = fixture();
        let dir = tempfile::tempdir().unwrap();
        save_checkpoint(&model, &vocab, dir.path()).unwrap();
        let path = dir.path().join(MODEL_FILE);
        let text = std::fs::read_to_string(&path).unwrap();
        std::fs::write(&path, text.replace("\"version\":1", "\"version\":9")).unwrap();
        assert!(matches!(
            load_checkpoint(dir.path()).unwrap_err(),
            CheckpointError::VersionMismatch(_)
        ));
    }
}
