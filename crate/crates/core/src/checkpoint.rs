//! Single-file JSON persistence for a trained model.
//!
//! One checkpoint carries everything inference needs: the model
//! configuration, the vocabulary, the frozen embedding table, all
//! parameter tensors, and a short record of the producing run. On load the
//! tensor manifest (names and shapes) is re-derived from the configuration
//! and compared against the stored tensors, so a truncated, reordered or
//! mismatched file fails loudly instead of predicting garbage.

use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ModelConfig, ModelParams};
use crate::textenc::{EmbeddingTable, Vocabulary};

/// Bumped whenever the on-disk layout changes incompatibly.
pub const FORMAT_VERSION: u32 = 1;

/// Minimal provenance of the training run that produced the parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainState {
    pub epochs_run: usize,
    pub best_epoch: usize,
    pub best_dev_acc: f64,
}

/// Everything needed to score new articles, as one JSON document.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format_version: u32,
    pub config: ModelConfig,
    pub vocab: Vocabulary,
    pub embeddings: EmbeddingTable,
    pub params: ModelParams,
    pub train_state: TrainState,
}

impl Checkpoint {
    pub fn new(
        config: ModelConfig,
        vocab: Vocabulary,
        embeddings: EmbeddingTable,
        params: ModelParams,
        train_state: TrainState,
    ) -> Self {
        Checkpoint {
            format_version: FORMAT_VERSION,
            config,
            vocab,
            embeddings,
            params,
            train_state,
        }
    }

    /// Cross-check the pieces against each other.
    pub fn validate(&self) -> Result<()> {
        if self.format_version != FORMAT_VERSION {
            return Err(Error::Checkpoint {
                msg: format!(
                    "format version {} is not the supported {FORMAT_VERSION}",
                    self.format_version
                ),
            });
        }
        self.config.validate()?;
        let expected = ModelParams::zeros(&self.config)?.manifest();
        let actual = self.params.manifest();
        if expected != actual {
            let detail = expected
                .iter()
                .zip(actual.iter())
                .find(|(e, a)| e != a)
                .map(|(e, a)| format!("expected {:?} but found {:?}", e, a))
                .unwrap_or_else(|| {
                    format!("expected {} tensors, found {}", expected.len(), actual.len())
                });
            return Err(Error::Checkpoint {
                msg: format!("parameter manifest mismatch: {detail}"),
            });
        }
        if self.vocab.len() != self.embeddings.matrix.nrows() {
            return Err(Error::Checkpoint {
                msg: format!(
                    "vocabulary has {} entries but the embedding table has {} rows",
                    self.vocab.len(),
                    self.embeddings.matrix.nrows()
                ),
            });
        }
        if self.embeddings.dim() != self.config.embed_dim {
            return Err(Error::Checkpoint {
                msg: format!(
                    "embedding table is {}-d but the configuration says {}",
                    self.embeddings.dim(),
                    self.config.embed_dim
                ),
            });
        }
        Ok(())
    }
}

pub fn save_checkpoint(path: impl AsRef<Path>, checkpoint: &Checkpoint) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    serde_json::to_writer(BufWriter::new(file), checkpoint).map_err(|e| Error::Checkpoint {
        msg: format!("failed to write {}: {e}", path.display()),
    })
}

/// Read, restore the vocabulary lookup index, and validate.
pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Checkpoint> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut checkpoint: Checkpoint =
        serde_json::from_reader(BufReader::new(file)).map_err(|e| Error::Checkpoint {
            msg: format!("failed to parse {}: {e}", path.display()),
        })?;
    checkpoint.vocab.rebuild_index();
    checkpoint.validate()?;
    Ok(checkpoint)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::batch_graphs;
    use crate::model::forward;
    use crate::textenc::{random_embeddings, PAD_TOKEN, OOV_TOKEN};
    use tempfile::tempdir;

    fn fixture() -> Checkpoint {
        let config = ModelConfig::micro();
        let mut tokens = vec![PAD_TOKEN.to_string(), OOV_TOKEN.to_string()];
        tokens.extend((0..10).map(|i| format!("w{i}")));
        let vocab = Vocabulary::from_tokens(tokens, 1);
        let embeddings = random_embeddings(&vocab, config.embed_dim, 3);
        let params = ModelParams::init(&config, 7).unwrap();
        Checkpoint::new(
            config,
            vocab,
            embeddings,
            params,
            TrainState {
                epochs_run: 2,
                best_epoch: 1,
                best_dev_acc: 0.75,
            },
        )
    }

    fn star_batch() -> crate::graph::GraphBatch {
        batch_graphs(&[crate::graph::NewsGraph {
            headline_ids: vec![2, 3],
            paragraph_ids: vec![vec![4, 5], vec![6, 7]],
            paragraph_positions: vec![0, 1],
            edges: vec![(0, 1), (0, 2)],
            edge_congruity: vec![1, 0],
            doc_label: 1,
        }])
        .unwrap()
    }

    #[test]
    fn round_trip_preserves_predictions() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("model.json");
        let original = fixture();
        let batch = star_batch();
        let before = forward(&original.params, &original.embeddings, &batch, &original.config)
            .unwrap();

        save_checkpoint(&path, &original).unwrap();
        let restored = load_checkpoint(&path).unwrap();
        let after = forward(&restored.params, &restored.embeddings, &batch, &restored.config)
            .unwrap();

        assert_eq!(before.doc_probs, after.doc_probs);
        assert_eq!(before.edge_weights, after.edge_weights);
        assert_eq!(restored.train_state, original.train_state);
    }

    #[test]
    fn vocabulary_lookup_survives_the_round_trip() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("model.json");
        let original = fixture();
        save_checkpoint(&path, &original).unwrap();
        let restored = load_checkpoint(&path).unwrap();
        assert_eq!(restored.vocab.lookup("w3"), original.vocab.lookup("w3"));
        assert_eq!(
            restored.vocab.lookup("never-seen"),
            crate::textenc::OOV_INDEX
        );
    }

    #[test]
    fn version_mismatch_is_rejected() {
        let mut checkpoint = fixture();
        checkpoint.format_version = FORMAT_VERSION + 1;
        match checkpoint.validate() {
            Err(Error::Checkpoint { msg }) => assert!(msg.contains("version")),
            other => panic!("expected checkpoint error, got {other:?}"),
        }
    }

    #[test]
    fn manifest_mismatch_is_rejected() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("model.json");
        let mut checkpoint = fixture();
        // Claim a different architecture than the stored tensors.
        checkpoint.config.gnn_hidden += 1;
        save_checkpoint(&path, &checkpoint).unwrap();
        match load_checkpoint(&path) {
            Err(Error::Checkpoint { msg }) => assert!(msg.contains("manifest")),
            other => panic!("expected checkpoint error, got {other:?}"),
        }
    }

    #[test]
    fn embedding_row_count_is_cross_checked() {
        let mut checkpoint = fixture();
        checkpoint.embeddings.matrix = checkpoint
            .embeddings
            .matrix
            .slice(ndarray::s![..4, ..])
            .to_owned();
        match checkpoint.validate() {
            Err(Error::Checkpoint { msg }) => assert!(msg.contains("rows")),
            other => panic!("expected checkpoint error, got {other:?}"),
        }
    }

    #[test]
    fn garbage_file_reports_a_parse_error() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("model.json");
        std::fs::write(&path, "{ not json").unwrap();
        match load_checkpoint(&path) {
            Err(Error::Checkpoint { msg }) => assert!(msg.contains("parse")),
            other => panic!("expected checkpoint error, got {other:?}"),
        }
    }
}
