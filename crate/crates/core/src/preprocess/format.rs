//! `LUTEX1` example files.
//!
//! Header: magic `LUTEX1`, then version, vocabulary size and padded length as
//! little-endian `u32`. Each record is a `u32` byte length followed by
//! count-prefixed little-endian arrays in this order: input ids (non-padding
//! prefix), segment ids, masked positions, masked labels, masked kinds,
//! position weights (`f32`), next-sentence label, unmasked ids of the whole
//! example, of part A and of part B.

use std::fs;
use std::io::Write;
use std::path::Path;

use super::example::{NsLabel, TrainingExample};
use super::PreprocessError;
use crate::tokenizer::TokenKind;

pub const EXAMPLE_MAGIC: &[u8; 6] = b"LUTEX1";
pub const EXAMPLE_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ExampleFileHeader {
    pub version: u32,
    pub vocab_size: u32,
    pub max_len: u32,
}

pub fn encode_examples(header: &ExampleFileHeader, examples: &[TrainingExample]) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(EXAMPLE_MAGIC);
    for v in [header.version, header.vocab_size, header.max_len] {
        out.extend_from_slice(&v.to_le_bytes());
    }
    let mut record = Vec::new();
    for ex in examples {
        record.clear();
        let n = ex.true_len();
        put_u32s(&mut record, &ex.input_ids[..n]);
        put_u32s(
            &mut record,
            &ex.segment_ids[..n].iter().map(|&s| s as u32).collect::<Vec<_>>(),
        );
        put_u32s(&mut record, &ex.masked_positions);
        put_u32s(&mut record, &ex.masked_labels);
        put_u32s(
            &mut record,
            &ex.masked_kinds.iter().map(|k| k.code() as u32).collect::<Vec<_>>(),
        );
        record.extend_from_slice(&(ex.position_weights.len() as u32).to_le_bytes());
        for w in &ex.position_weights {
            record.extend_from_slice(&w.to_le_bytes());
        }
        put_u32s(&mut record, &[ex.ns_label.index() as u32]);
        put_u32s(&mut record, &ex.unmasked_ids_full);
        put_u32s(&mut record, &ex.unmasked_ids_a);
        put_u32s(&mut record, &ex.unmasked_ids_b);
        out.extend_from_slice(&(record.len() as u32).to_le_bytes());
        out.extend_from_slice(&record);
    }
    out
}

pub fn write_examples(
    path: &Path,
    header: &ExampleFileHeader,
    examples: &[TrainingExample],
) -> Result<(), PreprocessError> {
    let bytes = encode_examples(header, examples);
    let mut f = fs::File::create(path).map_err(|e| PreprocessError::io(path, e))?;
    f.write_all(&bytes).map_err(|e| PreprocessError::io(path, e))
}

pub fn read_examples(
    path: &Path,
) -> Result<(ExampleFileHeader, Vec<TrainingExample>), PreprocessError> {
    let bytes = fs::read(path).map_err(|e| PreprocessError::io(path, e))?;
    decode_examples(&bytes)
}

pub fn decode_examples(
    bytes: &[u8],
) -> Result<(ExampleFileHeader, Vec<TrainingExample>), PreprocessError> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(6)? != EXAMPLE_MAGIC {
        return Err(PreprocessError::Format("not an example file".into()));
    }
    let header = ExampleFileHeader {
        version: r.u32()?,
        vocab_size: r.u32()?,
        max_len: r.u32()?,
    };
    if header.version != EXAMPLE_VERSION {
        return Err(PreprocessError::Format(format!(
            "example file version {} (supported {EXAMPLE_VERSION})",
            header.version
        )));
    }
    let max_len = header.max_len as usize;
    let mut examples = Vec::new();
    while r.pos < bytes.len() {
        let len = r.u32()? as usize;
        let body = r.take(len)?;
        let mut rec = Reader { bytes: body, pos: 0 };
        let mut input_ids = rec.u32s()?;
        let n = input_ids.len();
        if n > max_len {
            return Err(PreprocessError::Format(format!(
                "record of length {n} exceeds padded length {max_len}"
            )));
        }
        let mut segment_ids: Vec<u8> = rec.u32s()?.into_iter().map(|s| s as u8).collect();
        if segment_ids.len() != n {
            return Err(PreprocessError::Format("segment ids length mismatch".into()));
        }
        let masked_positions = rec.u32s()?;
        let masked_labels = rec.u32s()?;
        let masked_kinds = rec
            .u32s()?
            .into_iter()
            .map(|c| {
                TokenKind::from_code(c as u8)
                    .ok_or_else(|| PreprocessError::Format(format!("bad token kind {c}")))
            })
            .collect::<Result<Vec<_>, _>>()?;
        let wn = rec.u32()? as usize;
        let mut position_weights = Vec::with_capacity(wn);
        for _ in 0..wn {
            position_weights.push(f32::from_le_bytes(rec.take(4)?.try_into().unwrap()));
        }
        let ns = rec.u32s()?;
        let ns_label = ns
            .first()
            .and_then(|&i| NsLabel::from_index(i as usize))
            .ok_or_else(|| PreprocessError::Format("bad next-sentence label".into()))?;
        let unmasked_ids_full = rec.u32s()?;
        let unmasked_ids_a = rec.u32s()?;
        let unmasked_ids_b = rec.u32s()?;
        if rec.pos != body.len() {
            return Err(PreprocessError::Format("trailing bytes in record".into()));
        }
        input_ids.resize(max_len, 0);
        segment_ids.resize(max_len, 0);
        let mut attention_mask = vec![0u8; max_len];
        attention_mask[..n].iter_mut().for_each(|m| *m = 1);
        examples.push(TrainingExample {
            input_ids,
            segment_ids,
            attention_mask,
            masked_positions,
            masked_labels,
            masked_kinds,
            position_weights,
            ns_label,
            unmasked_ids_full,
            unmasked_ids_a,
            unmasked_ids_b,
        });
    }
    Ok((header, examples))
}

fn put_u32s(out: &mut Vec<u8>, values: &[u32]) {
    out.extend_from_slice(&(values.len() as u32).to_le_bytes());
    for v in values {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], PreprocessError> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| {
            PreprocessError::Format(format!(
                "truncated: needed {n} bytes at offset {}, {} available",
                self.pos,
                self.bytes.len() - self.pos
            ))
        })?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32, PreprocessError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u32s(&mut self) -> Result<Vec<u32>, PreprocessError> {
        let n = self.u32()? as usize;
        let raw = self.take(n.checked_mul(4).ok_or_else(|| {
            PreprocessError::Format("array length overflow".into())
        })?)?;
        Ok(raw
            .chunks_exact(4)
            .map(|c| u32::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }
}
