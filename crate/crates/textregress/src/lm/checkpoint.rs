//! On-disk checkpoint layout: a flat binary tensor container (`weights.bin`)
//! with a JSON index, plus `manifest.json` and the vocabulary.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lm::train::{AdamState, LrSchedule, TrainMode};
use crate::lm::transformer::{Model, TransformerConfig};
use crate::textio::Vocabulary;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub config: TransformerConfig,
    pub seed: u64,
    pub dataset_hash: String,
    pub optimizer: String,
    pub schedule: LrSchedule,
    pub base_lr: f64,
    pub mode: Option<TrainMode>,
    pub step: usize,
    pub best_val_loss: f64,
}

#[derive(Debug, Clone)]
pub struct LMCheckpoint {
    pub model: Model<f32>,
    pub vocab: Vocabulary,
    pub opt: AdamState<f32>,
    pub step: usize,
    pub manifest: Manifest,
}

#[derive(Debug, Serialize, Deserialize)]
struct IndexEntry {
    name: String,
    dtype: String,
    shape: Vec<usize>,
    /// Byte offset into weights.bin.
    offset: usize,
    len: usize,
}

impl LMCheckpoint {
    pub fn num_parameters(&self) -> usize {
        self.model.params.num_parameters()
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        let mut index: Vec<IndexEntry> = vec![];
        let mut blob: Vec<u8> = vec![];
        let mut dump = |prefix: &str, tensors: Vec<crate::lm::params::TensorRef<'_, f32>>| {
            for t in tensors {
                index.push(IndexEntry {
                    name: format!("{prefix}.{}", t.name),
                    dtype: "f32".into(),
                    shape: t.shape.clone(),
                    offset: blob.len(),
                    len: t.data.len(),
                });
                for v in t.data {
                    blob.extend_from_slice(&v.to_le_bytes());
                }
            }
        };
        dump("param", self.model.params.tensors());
        dump("adam_m", self.opt.m.tensors());
        dump("adam_v", self.opt.v.tensors());
        let mut f = std::io::BufWriter::new(std::fs::File::create(dir.join("weights.bin"))?);
        f.write_all(&blob)?;
        f.flush()?;
        serde_json::to_writer_pretty(
            std::io::BufWriter::new(std::fs::File::create(dir.join("index.json"))?),
            &index,
        )?;
        let mut manifest = self.manifest.clone();
        manifest.step = self.step;
        serde_json::to_writer_pretty(
            std::io::BufWriter::new(std::fs::File::create(dir.join("manifest.json"))?),
            &manifest,
        )?;
        self.vocab.save(&dir.join("vocab.json"))?;
        // Adam's step counter travels in a side file to keep the manifest
        // free of optimizer internals.
        std::fs::write(dir.join("opt_state.json"), serde_json::to_string(&self.opt.t)?)?;
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let manifest: Manifest = serde_json::from_reader(std::io::BufReader::new(
            std::fs::File::open(dir.join("manifest.json"))?,
        ))?;
        let vocab = Vocabulary::load(&dir.join("vocab.json"))?;
        let index: Vec<IndexEntry> = serde_json::from_reader(std::io::BufReader::new(
            std::fs::File::open(dir.join("index.json"))?,
        ))?;
        let mut blob = vec![];
        std::fs::File::open(dir.join("weights.bin"))?.read_to_end(&mut blob)?;

        let mut model = Model::<f32>::new(manifest.config, vocab.size(), manifest.seed)?;
        let mut opt = AdamState::new(&model.params);
        opt.t = serde_json::from_str(&std::fs::read_to_string(dir.join("opt_state.json"))?)?;
        let fill = |prefix: &str,
                        tensors: Vec<crate::lm::params::TensorMut<'_, f32>>|
         -> Result<()> {
            for t in tensors {
                let full = format!("{prefix}.{}", t.name);
                let entry = index
                    .iter()
                    .find(|e| e.name == full)
                    .ok_or_else(|| Error::Model(format!("missing tensor {full}")))?;
                if entry.shape != t.shape || entry.len != t.data.len() {
                    return Err(Error::Model(format!("shape mismatch for {full}")));
                }
                let start = entry.offset;
                let end = start + entry.len * 4;
                let bytes = blob
                    .get(start..end)
                    .ok_or_else(|| Error::Model(format!("truncated weights for {full}")))?;
                for (i, chunk) in bytes.chunks_exact(4).enumerate() {
                    t.data[i] = f32::from_le_bytes(chunk.try_into().unwrap());
                }
            }
            Ok(())
        };
        fill("param", model.params.tensors_mut())?;
        fill("adam_m", opt.m.tensors_mut())?;
        fill("adam_v", opt.v.tensors_mut())?;
        Ok(Self { model, vocab, opt, step: manifest.step, manifest })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lm::train::{init_model, pretrain, TrainConfig};
    use crate::taskgen::TaskGenConfig;
    use crate::textio::build_vocabulary;

    #[test]
    fn save_load_round_trip_is_bit_identical() {
        let studies =
            crate::taskgen::generate_bbob_dataset(&TaskGenConfig::new(2, 33)).unwrap();
        let vocab = build_vocabulary(&studies, 1024, Default::default()).unwrap();
        let config = TransformerConfig {
            enc_layers: 1,
            dec_layers: 1,
            heads: 2,
            head_dim: 8,
            embed_dim: 16,
            mlp_dim: 32,
            max_prompt_len: 96,
            max_target_len: 8,
            dropout: 0.0,
        };
        let start = init_model(&config, &vocab, 1).unwrap();
        let mut tc = TrainConfig::pretrain(1);
        tc.max_steps = 5;
        tc.batch_size = 8;
        let (ckpt, _) = pretrain(&start, &studies, &tc).unwrap();

        let dir = tempfile::tempdir().unwrap();
        ckpt.save(dir.path()).unwrap();
        let loaded = LMCheckpoint::load(dir.path()).unwrap();
        assert_eq!(ckpt.model.params, loaded.model.params);
        assert_eq!(ckpt.opt.m, loaded.opt.m);
        assert_eq!(ckpt.opt.v, loaded.opt.v);
        assert_eq!(ckpt.opt.t, loaded.opt.t);
        assert_eq!(ckpt.step, loaded.step);
        assert_eq!(ckpt.manifest.dataset_hash, loaded.manifest.dataset_hash);

        // Forward pass agrees exactly after the round trip.
        let prompt = vocab.encode_text("x0:1.5,x1:-2.0&title:'t'");
        let a = ckpt.model.encode_prompt(&prompt);
        let b = loaded.model.encode_prompt(&prompt);
        assert_eq!(a, b);
    }

    #[test]
    fn load_rejects_corrupt_index() {
        let studies =
            crate::taskgen::generate_bbob_dataset(&TaskGenConfig::new(1, 34)).unwrap();
        let vocab = build_vocabulary(&studies, 1024, Default::default()).unwrap();
        let config = TransformerConfig {
            enc_layers: 1,
            dec_layers: 1,
            heads: 2,
            head_dim: 8,
            embed_dim: 16,
            mlp_dim: 32,
            max_prompt_len: 64,
            max_target_len: 8,
            dropout: 0.0,
        };
        let ckpt = init_model(&config, &vocab, 1).unwrap();
        let dir = tempfile::tempdir().unwrap();
        ckpt.save(dir.path()).unwrap();
        std::fs::write(dir.path().join("weights.bin"), [0u8; 16]).unwrap();
        assert!(LMCheckpoint::load(dir.path()).is_err());
    }
}
