//! Versioned binary checkpoints.
//!
//! Layout: 4 magic bytes, a little-endian u32 format version, a
//! length-prefixed JSON block holding the configuration and vocabulary, then
//! every parameter tensor in declaration order with an explicit shape and
//! little-endian f32 data. Loading validates magic, version, shapes, and
//! exact file length, so truncation or header corruption is an error rather
//! than silent garbage.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::Vocabulary;
use crate::error::{Error, Result};

use super::params::ParamLayout;
use super::{TaggerConfig, TaggerModel};

const MAGIC: &[u8; 4] = b"CTG1";
pub const CHECKPOINT_FORMAT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct CheckpointMeta {
    config: TaggerConfig,
    vocab: Vec<String>,
}

impl TaggerModel {
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let file = File::create(path.as_ref())?;
        let mut w = BufWriter::new(file);
        w.write_all(MAGIC)?;
        w.write_all(&CHECKPOINT_FORMAT_VERSION.to_le_bytes())?;

        let meta = CheckpointMeta {
            config: self.config.clone(),
            vocab: self.vocab.tokens().to_vec(),
        };
        let meta_bytes = serde_json::to_vec(&meta)
            .map_err(|e| Error::Checkpoint(format!("serialize metadata: {e}")))?;
        w.write_all(&(meta_bytes.len() as u64).to_le_bytes())?;
        w.write_all(&meta_bytes)?;

        w.write_all(&(self.layout.tensors.len() as u32).to_le_bytes())?;
        for spec in &self.layout.tensors {
            w.write_all(&(spec.shape.len() as u32).to_le_bytes())?;
            for &dim in &spec.shape {
                w.write_all(&(dim as u32).to_le_bytes())?;
            }
            let data = &self.params[spec.offset..spec.offset + spec.len];
            for &v in data {
                w.write_all(&v.to_le_bytes())?;
            }
        }
        w.flush()?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<TaggerModel> {
        let path = path.as_ref();
        let file = File::open(path)?;
        let mut r = BufReader::new(file);

        let mut magic = [0u8; 4];
        read_exact(&mut r, &mut magic, "magic bytes")?;
        if &magic != MAGIC {
            return Err(Error::Checkpoint(format!(
                "{} is not a tagger checkpoint (bad magic)",
                path.display()
            )));
        }
        let version = read_u32(&mut r, "format version")?;
        if version != CHECKPOINT_FORMAT_VERSION {
            return Err(Error::Checkpoint(format!(
                "unsupported checkpoint format version {version} (expected {CHECKPOINT_FORMAT_VERSION})"
            )));
        }

        let meta_len = read_u64(&mut r, "metadata length")? as usize;
        if meta_len > 256 * 1024 * 1024 {
            return Err(Error::Checkpoint("metadata length is implausibly large".into()));
        }
        let mut meta_bytes = vec![0u8; meta_len];
        read_exact(&mut r, &mut meta_bytes, "metadata block")?;
        let meta: CheckpointMeta = serde_json::from_slice(&meta_bytes)
            .map_err(|e| Error::Checkpoint(format!("corrupt metadata block: {e}")))?;
        meta.config.validate().map_err(|e| Error::Checkpoint(format!("stored config: {e}")))?;
        let vocab = Vocabulary::from_tokens(meta.vocab);
        if vocab.size() != meta.config.vocab_size {
            return Err(Error::Checkpoint(format!(
                "stored vocabulary ({} ids) disagrees with config vocab_size {}",
                vocab.size(),
                meta.config.vocab_size
            )));
        }

        let layout = ParamLayout::from_config(&meta.config);
        let tensor_count = read_u32(&mut r, "tensor count")? as usize;
        if tensor_count != layout.tensors.len() {
            return Err(Error::Checkpoint(format!(
                "checkpoint has {tensor_count} tensors, config implies {}",
                layout.tensors.len()
            )));
        }
        let mut params = vec![0.0f32; layout.total];
        for spec in &layout.tensors {
            let ndim = read_u32(&mut r, "tensor rank")? as usize;
            if ndim != spec.shape.len() {
                return Err(Error::Checkpoint(format!(
                    "tensor {} has rank {ndim}, expected {}",
                    spec.name,
                    spec.shape.len()
                )));
            }
            for &expected in &spec.shape {
                let dim = read_u32(&mut r, "tensor dimension")? as usize;
                if dim != expected {
                    return Err(Error::Checkpoint(format!(
                        "tensor {} has dimension {dim}, expected {expected}",
                        spec.name
                    )));
                }
            }
            let mut buf = vec![0u8; spec.len * 4];
            read_exact(&mut r, &mut buf, "tensor data")?;
            for (i, chunk) in buf.chunks_exact(4).enumerate() {
                params[spec.offset + i] = f32::from_le_bytes(chunk.try_into().expect("4 bytes"));
            }
        }

        let mut trailing = [0u8; 1];
        if r.read(&mut trailing)? != 0 {
            return Err(Error::Checkpoint("trailing bytes after parameter data".into()));
        }

        Ok(TaggerModel { config: meta.config, vocab, params, layout })
    }
}

fn read_exact(r: &mut impl Read, buf: &mut [u8], what: &str) -> Result<()> {
    r.read_exact(buf)
        .map_err(|e| Error::Checkpoint(format!("truncated checkpoint while reading {what}: {e}")))
}

fn read_u32(r: &mut impl Read, what: &str) -> Result<u32> {
    let mut buf = [0u8; 4];
    read_exact(r, &mut buf, what)?;
    Ok(u32::from_le_bytes(buf))
}

fn read_u64(r: &mut impl Read, what: &str) -> Result<u64> {
    let mut buf = [0u8; 8];
    read_exact(r, &mut buf, what)?;
    Ok(u64::from_le_bytes(buf))
}
