//! `LUTLM1` checkpoint files.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! magic "LUTLM1" | version u32
//! config text (u32 length + UTF-8)
//! vocabulary: base count u32, emoticon count u32, then each token (u32 length + UTF-8)
//! optimizer step u64
//! manifest: tensor count u32, then per tensor
//!   name (u32 length + UTF-8) | rank u32 | dims u64 × rank | payload offset u64
//! payload length u64 | payload (f32 values)
//! SHA-256 of every preceding byte
//! ```

use std::path::Path;

use sha2::{Digest, Sha256};
use thiserror::Error;

use super::config::{model_config_text, parse_model_config};
use crate::encoder::{check_store, ModelConfig};
use crate::numeric::{ParamStore, Tensor};
use crate::tokenizer::Vocabulary;

pub const CHECKPOINT_MAGIC: &[u8; 6] = b"LUTLM1";
pub const CHECKPOINT_VERSION: u32 = 1;
const DIGEST_LEN: usize = 32;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("not a checkpoint")]
    NotACheckpoint,
    #[error("checkpoint version {found} is not supported (this build reads version {supported})")]
    Version { found: u32, supported: u32 },
    #[error("truncated checkpoint: expected at least {expected} bytes, found {actual}")]
    Truncated { expected: usize, actual: usize },
    #[error("malformed checkpoint: {0}")]
    Malformed(String),
    #[error("checkpoint does not match the requested configuration: {0}")]
    ConfigMismatch(String),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Clone, Debug)]
pub struct Checkpoint {
    pub config: ModelConfig,
    pub vocab: Vocabulary,
    pub step: u64,
    pub params: ParamStore<f32>,
}

#[derive(Clone, Debug)]
pub struct LoadedCheckpoint {
    pub checkpoint: Checkpoint,
    /// False when the stored whole-file digest does not match the contents.
    pub checksum_ok: bool,
}

fn put_bytes(out: &mut Vec<u8>, b: &[u8]) {
    out.extend_from_slice(&(b.len() as u32).to_le_bytes());
    out.extend_from_slice(b);
}

pub fn encode_checkpoint(ck: &Checkpoint) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(CHECKPOINT_MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    put_bytes(&mut out, model_config_text(&ck.config).as_bytes());

    let tokens = ck.vocab.tokens();
    let base = ck.vocab.base_size();
    out.extend_from_slice(&(base as u32).to_le_bytes());
    out.extend_from_slice(&((tokens.len() - base) as u32).to_le_bytes());
    for t in tokens {
        put_bytes(&mut out, t.as_bytes());
    }
    out.extend_from_slice(&ck.step.to_le_bytes());

    out.extend_from_slice(&(ck.params.len() as u32).to_le_bytes());
    let mut offset = 0u64;
    for (name, t) in ck.params.iter() {
        put_bytes(&mut out, name.as_bytes());
        out.extend_from_slice(&(t.rank() as u32).to_le_bytes());
        for &d in t.shape() {
            out.extend_from_slice(&(d as u64).to_le_bytes());
        }
        out.extend_from_slice(&offset.to_le_bytes());
        offset += 4 * t.len() as u64;
    }
    out.extend_from_slice(&offset.to_le_bytes());
    for (_, t) in ck.params.iter() {
        for v in t.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    let digest = Sha256::digest(&out);
    out.extend_from_slice(&digest);
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], CheckpointError> {
        match self.pos.checked_add(n) {
            Some(end) if end <= self.bytes.len() => {
                let s = &self.bytes[self.pos..end];
                self.pos = end;
                Ok(s)
            }
            _ => Err(CheckpointError::Truncated {
                expected: self.pos.saturating_add(n).saturating_add(DIGEST_LEN),
                actual: self.bytes.len() + DIGEST_LEN,
            }),
        }
    }

    fn u32(&mut self) -> Result<u32, CheckpointError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64, CheckpointError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn string(&mut self) -> Result<String, CheckpointError> {
        let n = self.u32()? as usize;
        let b = self.take(n)?;
        String::from_utf8(b.to_vec()).map_err(|_| CheckpointError::Malformed("invalid UTF-8".into()))
    }
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<LoadedCheckpoint, CheckpointError> {
    if bytes.len() < CHECKPOINT_MAGIC.len() || &bytes[..6] != CHECKPOINT_MAGIC {
        return Err(CheckpointError::NotACheckpoint);
    }
    if bytes.len() < 10 + DIGEST_LEN {
        return Err(CheckpointError::Truncated {
            expected: 10 + DIGEST_LEN,
            actual: bytes.len(),
        });
    }
    let version = u32::from_le_bytes(bytes[6..10].try_into().unwrap());
    if version != CHECKPOINT_VERSION {
        return Err(CheckpointError::Version {
            found: version,
            supported: CHECKPOINT_VERSION,
        });
    }
    let (body, stored_digest) = bytes.split_at(bytes.len() - DIGEST_LEN);
    let mut r = Reader { bytes: body, pos: 10 };

    let config_text = r.string()?;
    let config = parse_model_config(&config_text)
        .map_err(|e| CheckpointError::Malformed(format!("config echo: {e}")))?;

    let base = r.u32()? as usize;
    let extra = r.u32()? as usize;
    let mut tokens = Vec::new();
    for _ in 0..base.saturating_add(extra) {
        tokens.push(r.string()?);
    }
    let vocab = Vocabulary::from_tokens(&tokens[..base], &tokens[base..])
        .map_err(|e| CheckpointError::Malformed(format!("vocabulary: {e}")))?;
    let step = r.u64()?;

    let count = r.u32()? as usize;
    let mut manifest = Vec::with_capacity(count);
    for _ in 0..count {
        let name = r.string()?;
        let rank = r.u32()? as usize;
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            shape.push(r.u64()? as usize);
        }
        let offset = r.u64()? as usize;
        manifest.push((name, shape, offset));
    }
    let payload_len = r.u64()? as usize;
    let payload_start = r.pos;
    let expected = payload_start.saturating_add(payload_len).saturating_add(DIGEST_LEN);
    if expected != bytes.len() {
        if expected > bytes.len() {
            return Err(CheckpointError::Truncated {
                expected,
                actual: bytes.len(),
            });
        }
        return Err(CheckpointError::Malformed(format!(
            "{} trailing bytes after payload",
            bytes.len() - expected
        )));
    }
    let payload = &body[payload_start..];

    // offsets must tile the payload exactly, in order
    let mut params = ParamStore::new();
    let mut cursor = 0usize;
    for (name, shape, offset) in manifest {
        let n: usize = shape.iter().product();
        if offset != cursor {
            return Err(CheckpointError::Malformed(format!(
                "tensor {name} at offset {offset}, expected {cursor}"
            )));
        }
        let end = offset
            .checked_add(n.checked_mul(4).unwrap_or(usize::MAX))
            .filter(|&e| e <= payload.len())
            .ok_or_else(|| CheckpointError::Malformed(format!("tensor {name} overruns payload")))?;
        let data: Vec<f32> = payload[offset..end]
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        let t = Tensor::new(shape, data).map_err(|e| CheckpointError::Malformed(e.to_string()))?;
        params.insert(name, t);
        cursor = end;
    }
    if cursor != payload.len() {
        return Err(CheckpointError::Malformed(format!(
            "manifest covers {cursor} of {} payload bytes",
            payload.len()
        )));
    }
    check_store(&config, &params).map_err(|e| CheckpointError::Malformed(e.to_string()))?;
    if config.vocab != vocab.len() {
        return Err(CheckpointError::Malformed(format!(
            "config vocab {} but {} stored tokens",
            config.vocab,
            vocab.len()
        )));
    }

    let checksum_ok = Sha256::digest(body).as_slice() == stored_digest;
    if !checksum_ok {
        log::warn!("checkpoint checksum mismatch; contents may be corrupted");
    }
    Ok(LoadedCheckpoint {
        checkpoint: Checkpoint {
            config,
            vocab,
            step,
            params,
        },
        checksum_ok,
    })
}

pub fn save_checkpoint(path: &Path, ck: &Checkpoint) -> Result<(), CheckpointError> {
    let bytes = encode_checkpoint(ck);
    // write-then-rename so an interrupted save never clobbers the old file
    let tmp = path.with_extension("partial");
    let io = |e| CheckpointError::Io {
        path: path.display().to_string(),
        source: e,
    };
    std::fs::write(&tmp, bytes).map_err(io)?;
    std::fs::rename(&tmp, path).map_err(io)
}

pub fn load_checkpoint(path: &Path) -> Result<LoadedCheckpoint, CheckpointError> {
    let bytes = std::fs::read(path).map_err(|e| CheckpointError::Io {
        path: path.display().to_string(),
        source: e,
    })?;
    decode_checkpoint(&bytes)
}

impl LoadedCheckpoint {
    /// Fails unless the stored configuration equals `expected`.
    pub fn expect_config(&self, expected: &ModelConfig) -> Result<(), CheckpointError> {
        if &self.checkpoint.config != expected {
            return Err(CheckpointError::ConfigMismatch(format!(
                "stored {:?}, requested {:?}",
                self.checkpoint.config, expected
            )));
        }
        Ok(())
    }
}
