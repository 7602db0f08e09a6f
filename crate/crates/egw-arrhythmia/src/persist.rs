//! Model file format.
//!
//! Layout: magic `EGW1`, format version (u32 LE), header length (u32 LE),
//! header JSON (config, seed, precision, training history, batch-norm batch
//! counts, metric summary), block count (u32 LE), then per parameter block a
//! u64 LE length and that many little-endian f64 values, and finally a CRC32
//! (u32 LE) over every preceding byte.

use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};

use egw_nn::{Layer, Precision};

use crate::model::{build_model, ModelConfig, TrainedModel};
use crate::ArrhythmiaError;

pub const MODEL_MAGIC: [u8; 4] = *b"EGW1";
pub const MODEL_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct Header {
    config: ModelConfig,
    seed: u64,
    precision: Precision,
    loss_history: Vec<f64>,
    val_accuracy: Vec<f64>,
    /// Training batches folded into each batch-norm layer, in layer order.
    bn_batches_seen: Vec<u64>,
    summary: Summary,
}

#[derive(Serialize, Deserialize)]
struct Summary {
    final_loss: Option<f64>,
    final_val_accuracy: Option<f64>,
}

/// Parameter blocks in layer order; the loader fills them back in the same
/// order against a freshly assembled architecture.
fn param_blocks(model: &egw_nn::Model) -> Vec<Vec<f64>> {
    let mut blocks = Vec::new();
    for layer in &model.layers {
        match layer {
            Layer::Conv1d(c) => {
                blocks.push(c.weights.data.clone());
                blocks.push(c.bias.clone());
            }
            Layer::BatchNorm(b) => {
                blocks.push(b.gamma.clone());
                blocks.push(b.beta.clone());
                blocks.push(b.running_mean.clone());
                blocks.push(b.running_var.clone());
            }
            Layer::Dense(d) => {
                blocks.push(d.weights.data.clone());
                blocks.push(d.bias.clone());
            }
            _ => {}
        }
    }
    blocks
}

pub fn save_model(trained: &TrainedModel, path: &Path) -> Result<(), ArrhythmiaError> {
    let bn_batches_seen: Vec<u64> = trained
        .model
        .layers
        .iter()
        .filter_map(|l| match l {
            Layer::BatchNorm(b) => Some(b.batches_seen),
            _ => None,
        })
        .collect();
    let header = Header {
        config: trained.config.clone(),
        seed: trained.seed,
        precision: trained.model.precision,
        loss_history: trained.loss_history.clone(),
        val_accuracy: trained.val_accuracy.clone(),
        bn_batches_seen,
        summary: Summary {
            final_loss: trained.loss_history.last().copied(),
            final_val_accuracy: trained.val_accuracy.last().copied(),
        },
    };
    let header_json = serde_json::to_value(&header)
        .map_err(|e| ArrhythmiaError::ModelFile(format!("header serialization: {e}")))?
        .to_string();

    let mut bytes = Vec::new();
    bytes.extend_from_slice(&MODEL_MAGIC);
    bytes.extend_from_slice(&MODEL_VERSION.to_le_bytes());
    bytes.extend_from_slice(&(header_json.len() as u32).to_le_bytes());
    bytes.extend_from_slice(header_json.as_bytes());

    let blocks = param_blocks(&trained.model);
    bytes.extend_from_slice(&(blocks.len() as u32).to_le_bytes());
    for block in &blocks {
        bytes.extend_from_slice(&(block.len() as u64).to_le_bytes());
        for v in block {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
    }

    let crc = crc32fast::hash(&bytes);
    bytes.extend_from_slice(&crc.to_le_bytes());
    std::fs::write(path, bytes).map_err(|e| ArrhythmiaError::io(path, e))
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], ArrhythmiaError> {
        if self.pos + n > self.bytes.len() {
            return Err(ArrhythmiaError::ModelFile(format!(
                "unexpected end of file at byte {} (needed {n} more)",
                self.pos
            )));
        }
        let slice = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(slice)
    }

    fn u32(&mut self) -> Result<u32, ArrhythmiaError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64, ArrhythmiaError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
}

pub fn load_model(path: &Path) -> Result<TrainedModel, ArrhythmiaError> {
    let bytes = std::fs::read(path).map_err(|e| ArrhythmiaError::io(path, e))?;
    if bytes.len() < 16 {
        return Err(ArrhythmiaError::ModelFile("file too short to be a model".into()));
    }
    let (body, crc_bytes) = bytes.split_at(bytes.len() - 4);
    let mut r = Reader { bytes: body, pos: 0 };

    if r.take(4)? != MODEL_MAGIC {
        return Err(ArrhythmiaError::ModelFile("bad magic; not a model file".into()));
    }
    let version = r.u32()?;
    if version != MODEL_VERSION {
        return Err(ArrhythmiaError::Version { found: version, expected: MODEL_VERSION });
    }
    let header_len = r.u32()? as usize;
    let header: Header = serde_json::from_slice(r.take(header_len)?)
        .map_err(|e| ArrhythmiaError::ModelFile(format!("header parse: {e}")))?;

    let block_count = r.u32()? as usize;
    let mut blocks = Vec::with_capacity(block_count);
    for _ in 0..block_count {
        let len = r.u64()? as usize;
        let raw = r.take(len * 8)?;
        let block: Vec<f64> = raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        blocks.push(block);
    }
    if r.pos != body.len() {
        return Err(ArrhythmiaError::ModelFile(format!(
            "{} trailing bytes after parameter blocks",
            body.len() - r.pos
        )));
    }

    // Structure parsed; now authenticate the content.
    let stored = u32::from_le_bytes(crc_bytes.try_into().expect("4 bytes"));
    let computed = crc32fast::hash(body);
    if stored != computed {
        return Err(ArrhythmiaError::Checksum { stored, computed });
    }

    // Rebuild the architecture from the config and pour the blocks back in.
    let mut seed_rng = ChaCha12Rng::seed_from_u64(0);
    let mut model = build_model(&header.config, &mut seed_rng)?;
    model.precision = header.precision;
    let mut next = blocks.into_iter();
    let mut bn_counts = header.bn_batches_seen.iter();
    let mut fill = |target: &mut Vec<f64>, what: &str| -> Result<(), ArrhythmiaError> {
        let block = next
            .next()
            .ok_or_else(|| ArrhythmiaError::ModelFile(format!("missing block for {what}")))?;
        if block.len() != target.len() {
            return Err(ArrhythmiaError::ModelFile(format!(
                "{what}: block length {} does not match architecture ({})",
                block.len(),
                target.len()
            )));
        }
        *target = block;
        Ok(())
    };
    for layer in &mut model.layers {
        match layer {
            Layer::Conv1d(c) => {
                fill(&mut c.weights.data, "conv weights")?;
                fill(&mut c.bias, "conv bias")?;
            }
            Layer::BatchNorm(b) => {
                fill(&mut b.gamma, "batchnorm gamma")?;
                fill(&mut b.beta, "batchnorm beta")?;
                fill(&mut b.running_mean, "batchnorm running mean")?;
                fill(&mut b.running_var, "batchnorm running variance")?;
                b.batches_seen = *bn_counts.next().ok_or_else(|| {
                    ArrhythmiaError::ModelFile("missing batch-norm batch count".into())
                })?;
            }
            Layer::Dense(d) => {
                fill(&mut d.weights.data, "dense weights")?;
                fill(&mut d.bias, "dense bias")?;
            }
            _ => {}
        }
    }
    if next.next().is_some() {
        return Err(ArrhythmiaError::ModelFile("extra parameter blocks".into()));
    }

    Ok(TrainedModel {
        config: header.config,
        model,
        seed: header.seed,
        loss_history: header.loss_history,
        val_accuracy: header.val_accuracy,
    })
}
