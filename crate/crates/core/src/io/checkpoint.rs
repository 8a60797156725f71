//! Named-array archive checkpoints.
//!
//! Layout: magic `NAA1\n`, a little-endian u64 header length, a JSON header
//! (`meta` object plus an `arrays` table mapping names to shape/dtype/offset),
//! then the raw array payload — flat little-endian f64, in header order.
//! Everything the transceiver needs travels in one file: encoder/decoder
//! weights, batch-norm statistics, the per-level `embedding_space_l`
//! codebooks, and optionally discriminator weights and optimizer moments for
//! resumable training.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::model::{Model, ModelSpec};
use crate::nn::{Adam, ParamSet, Tensor};
use crate::train::{DiscriminatorConfig, TrainConfig, Trainer};
use crate::{Error, Result};

const MAGIC: &[u8; 5] = b"NAA1\n";

#[derive(Debug, Serialize, Deserialize)]
struct ArrayEntry {
    name: String,
    shape: Vec<usize>,
    dtype: String,
    offset: u64,
    len: u64,
}

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    meta: serde_json::Value,
    arrays: Vec<ArrayEntry>,
}

/// Writes a named-array archive.
pub fn write_archive(
    path: &Path,
    meta: &serde_json::Value,
    arrays: &[(String, &Tensor)],
) -> Result<()> {
    let mut entries = Vec::with_capacity(arrays.len());
    let mut offset = 0u64;
    for (name, t) in arrays {
        entries.push(ArrayEntry {
            name: name.clone(),
            shape: t.shape().to_vec(),
            dtype: "f64".into(),
            offset,
            len: t.numel() as u64,
        });
        offset += 8 * t.numel() as u64;
    }
    let header = serde_json::to_vec(&Header {
        meta: meta.clone(),
        arrays: entries,
    })?;
    let mut f = std::fs::File::create(path)?;
    f.write_all(MAGIC)?;
    f.write_all(&(header.len() as u64).to_le_bytes())?;
    f.write_all(&header)?;
    let mut buf = Vec::with_capacity(offset as usize);
    for (_, t) in arrays {
        for v in t.data() {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    f.write_all(&buf)?;
    Ok(())
}

/// Reads a named-array archive back.
pub fn read_archive(path: &Path) -> Result<(serde_json::Value, Vec<(String, Tensor)>)> {
    let mut f = std::fs::File::open(path)?;
    let mut magic = [0u8; 5];
    f.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::Checkpoint("bad magic (not a named-array archive)".into()));
    }
    let mut len_bytes = [0u8; 8];
    f.read_exact(&mut len_bytes)?;
    let header_len = u64::from_le_bytes(len_bytes) as usize;
    let mut header_bytes = vec![0u8; header_len];
    f.read_exact(&mut header_bytes)?;
    let header: Header = serde_json::from_slice(&header_bytes)?;
    let mut payload = Vec::new();
    f.read_to_end(&mut payload)?;

    let mut arrays = Vec::with_capacity(header.arrays.len());
    for e in &header.arrays {
        if e.dtype != "f64" {
            return Err(Error::Checkpoint(format!("unsupported dtype {}", e.dtype)));
        }
        let start = e.offset as usize;
        let end = start + 8 * e.len as usize;
        if end > payload.len() {
            return Err(Error::Checkpoint(format!("array {} truncated", e.name)));
        }
        let data: Vec<f64> = payload[start..end]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        let expected: usize = e.shape.iter().product();
        if expected != data.len() {
            return Err(Error::Checkpoint(format!(
                "array {}: shape {:?} vs {} elements",
                e.name,
                e.shape,
                data.len()
            )));
        }
        arrays.push((e.name.clone(), Tensor::new(e.shape.clone(), data)));
    }
    Ok((header.meta, arrays))
}

/// Structured metadata carried in checkpoints.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub spec: ModelSpec,
    pub init_seed: u64,
    #[serde(default)]
    pub epoch: usize,
    #[serde(default)]
    pub global_step: u64,
    #[serde(default)]
    pub disc: Option<DiscriminatorConfig>,
    #[serde(default)]
    pub train: Option<TrainConfig>,
    #[serde(default)]
    pub best_val_ms_ssim: Option<f64>,
}

fn params_arrays(params: &ParamSet) -> Vec<(String, &Tensor)> {
    params.iter().map(|(_, n, t, _)| (n.to_string(), t)).collect()
}

fn adam_arrays<'a>(prefix: &str, opt: &'a Adam, params: &ParamSet) -> Vec<(String, &'a Tensor)> {
    let mut out = Vec::new();
    for (idx, m, v) in opt.state() {
        let name = params.name(idx);
        out.push((format!("{prefix}.m.{name}"), m));
        out.push((format!("{prefix}.v.{name}"), v));
    }
    out
}

/// Saves the model only (enough for sweep/roundtrip).
pub fn save_model(path: &Path, model: &Model) -> Result<()> {
    let meta = CheckpointMeta {
        spec: model.spec.clone(),
        init_seed: model.init_seed,
        epoch: 0,
        global_step: 0,
        disc: None,
        train: None,
        best_val_ms_ssim: None,
    };
    write_archive(path, &json!(meta), &params_arrays(&model.params))
}

/// Loads a model (ignores any training-only arrays present).
pub fn load_model(path: &Path) -> Result<(Model, CheckpointMeta)> {
    let (meta_value, arrays) = read_archive(path)?;
    let meta: CheckpointMeta = serde_json::from_value(meta_value)?;
    let mut model = Model::init(meta.spec.clone(), meta.init_seed)?;
    let mut loaded = 0usize;
    for (name, t) in arrays {
        if name.starts_with("disc.") || name.starts_with("opt.") {
            continue;
        }
        model.params.load(&name, t)?;
        loaded += 1;
    }
    if loaded != model.params.len() {
        return Err(Error::Checkpoint(format!(
            "checkpoint holds {loaded} model arrays, expected {}",
            model.params.len()
        )));
    }
    Ok((model, meta))
}

/// Saves the full training state (model + discriminator + optimizer moments).
pub fn save_training(
    path: &Path,
    trainer: &Trainer,
    epoch: usize,
    best_val_ms_ssim: Option<f64>,
) -> Result<()> {
    let meta = CheckpointMeta {
        spec: trainer.model.spec.clone(),
        init_seed: trainer.model.init_seed,
        epoch,
        global_step: trainer.global_step,
        disc: Some(trainer.disc_cfg.clone()),
        train: Some(trainer.cfg.clone()),
        best_val_ms_ssim,
    };
    let mut arrays = params_arrays(&trainer.model.params);
    arrays.extend(params_arrays(&trainer.disc_params));
    arrays.extend(adam_arrays("opt.gen", &trainer.opt_gen, &trainer.model.params));
    arrays.extend(adam_arrays("opt.disc", &trainer.opt_disc, &trainer.disc_params));
    let mut meta_value = json!(meta);
    meta_value["opt_gen_t"] = json!(trainer.opt_gen.step_count());
    meta_value["opt_disc_t"] = json!(trainer.opt_disc.step_count());
    write_archive(path, &meta_value, &arrays)
}

/// Restores a full trainer from a training checkpoint.
pub fn load_training(path: &Path) -> Result<(Trainer, CheckpointMeta)> {
    let (meta_value, arrays) = read_archive(path)?;
    let meta: CheckpointMeta = serde_json::from_value(meta_value.clone())?;
    let disc_cfg = meta
        .disc
        .clone()
        .ok_or_else(|| Error::Checkpoint("not a training checkpoint (no discriminator)".into()))?;
    let train_cfg = meta
        .train
        .clone()
        .ok_or_else(|| Error::Checkpoint("not a training checkpoint (no train config)".into()))?;
    let model = Model::init(meta.spec.clone(), meta.init_seed)?;
    let mut trainer = Trainer::new(model, disc_cfg, train_cfg)?;
    trainer.global_step = meta.global_step;

    let mut gen_m = Vec::new();
    let mut gen_v = Vec::new();
    let mut disc_m = Vec::new();
    let mut disc_v = Vec::new();
    for (name, t) in arrays {
        if let Some(rest) = name.strip_prefix("opt.gen.m.") {
            gen_m.push((rest.to_string(), t));
        } else if let Some(rest) = name.strip_prefix("opt.gen.v.") {
            gen_v.push((rest.to_string(), t));
        } else if let Some(rest) = name.strip_prefix("opt.disc.m.") {
            disc_m.push((rest.to_string(), t));
        } else if let Some(rest) = name.strip_prefix("opt.disc.v.") {
            disc_v.push((rest.to_string(), t));
        } else if name.starts_with("disc.") {
            trainer.disc_params.load(&name, t)?;
        } else {
            trainer.model.params.load(&name, t)?;
        }
    }
    let collect = |ms: Vec<(String, Tensor)>,
                   vs: Vec<(String, Tensor)>,
                   params: &ParamSet|
     -> Result<Vec<(usize, Tensor, Tensor)>> {
        let mut out = Vec::new();
        for (name, m) in ms {
            let v = vs
                .iter()
                .find(|(n, _)| *n == name)
                .map(|(_, t)| t.clone())
                .ok_or_else(|| Error::Checkpoint(format!("missing second moment for {name}")))?;
            out.push((params.idx(&name), m, v));
        }
        Ok(out)
    };
    let gen_t = meta_value["opt_gen_t"].as_u64().unwrap_or(0);
    let disc_t = meta_value["opt_disc_t"].as_u64().unwrap_or(0);
    let gen_state = collect(gen_m, gen_v, &trainer.model.params)?;
    let disc_state = collect(disc_m, disc_v, &trainer.disc_params)?;
    trainer.opt_gen.restore(gen_t, gen_state);
    trainer.opt_disc.restore(disc_t, disc_state);
    Ok((trainer, meta))
}
